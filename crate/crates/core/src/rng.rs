//! Counter-based randomness.
//!
//! Every random quantity is a pure function of a seed and integer coordinates,
//! so any line or lattice site can be evaluated on demand, in any order.

/// Domain tags keep independent streams apart.
pub const TAG_LINE: u64 = 0x6c69_6e65_5f62_6164;
pub const TAG_ENV: u64 = 0x656e_7669_726f_6e6d;
pub const TAG_FIELD: u64 = 0x6669_656c_645f_6f63;
pub const TAG_THIN: u64 = 0x7468_696e_5f62_6164;

const K1: u64 = 0x9E37_79B9_7F4A_7C15;
const K2: u64 = 0xC2B2_AE3D_27D4_EB4F;
const K3: u64 = 0x1656_67B1_9E37_79F9;

/// splitmix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline(always)]
pub fn hash2(seed: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(seed ^ a.wrapping_mul(K1)) ^ b.wrapping_mul(K2))
}

#[inline(always)]
pub fn hash3(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    mix64(mix64(mix64(seed ^ a.wrapping_mul(K1)) ^ b.wrapping_mul(K2)) ^ c.wrapping_mul(K3))
}

/// Seed of an independent sub-stream, e.g. per replica.
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    hash3(master, index, tag, 0x5eed)
}

/// A probability as a 64-bit comparison threshold: an event with uniform
/// `u` happens iff `u < thr`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    Never,
    Always,
    Below(u64),
}

impl Threshold {
    pub fn new(p: f64) -> Self {
        if !(p > 0.0) {
            Threshold::Never
        } else if p >= 1.0 {
            Threshold::Always
        } else {
            // p * 2^64, exact for the representable range
            let t = (p * 18_446_744_073_709_551_616.0) as u64;
            if t == 0 {
                Threshold::Never
            } else {
                Threshold::Below(t)
            }
        }
    }

    #[inline(always)]
    pub fn hit(self, u: u64) -> bool {
        match self {
            Threshold::Never => false,
            Threshold::Always => true,
            Threshold::Below(t) => u < t,
        }
    }
}

/// 64 independent Bernoulli draws packed in a word. Lane `b` compares a
/// virtual uniform, whose bit planes are `hash3(seed, a, b_word, plane)`,
/// against the threshold; bits are only generated until every lane is decided.
#[inline]
pub fn bernoulli_word(seed: u64, a: u64, w: u64, thr: Threshold) -> u64 {
    let t = match thr {
        Threshold::Never => return 0,
        Threshold::Always => return !0,
        Threshold::Below(t) => t,
    };
    let base = mix64(mix64(seed ^ a.wrapping_mul(K1)) ^ w.wrapping_mul(K2));
    let low = t.trailing_zeros() as i32;
    let mut result = 0u64;
    let mut undecided = !0u64;
    // The first planes run without branches. Planes below the lowest set
    // bit of t can only settle lanes as closed, so running them is harmless.
    for bit in (56..64).rev() {
        let r = mix64(base ^ ((64 - bit) as u64).wrapping_mul(K3));
        let tb = 0u64.wrapping_sub((t >> bit) & 1);
        result |= undecided & !r & tb;
        undecided &= !(r ^ tb);
    }
    let mut bit = 55i32;
    while undecided != 0 && bit >= low {
        let r = mix64(base ^ ((64 - bit) as u64).wrapping_mul(K3));
        if (t >> bit) & 1 == 1 {
            result |= undecided & !r;
            undecided &= r;
        } else {
            undecided &= !r;
        }
        bit -= 1;
    }
    result
}
