use serde::Serialize;

use crate::environment::{Environment, EnvironmentConfig};
use crate::error::{Error, Result};
use crate::rng::{bernoulli_word, derive_seed, Threshold, TAG_THIN};

/// How bad rows are derived from the good-row draw, keeping the field
/// monotone in both probabilities for a shared seed.
#[derive(Clone, Copy, Debug)]
enum BadRule {
    /// p_B ≤ p_G: open_good ∧ Bern(p_B / p_G).
    Thin(Threshold),
    /// p_B > p_G: open_good ∨ Bern((p_B − p_G) / (1 − p_G)).
    Boost(Threshold),
}

/// Site states η. Site (x, y) with x + y even is stored at lattice index
/// i = (x − (y mod 2)) / 2, bit i mod 64 of word ⌊i / 64⌋.
#[derive(Clone, Debug, Serialize)]
pub struct OccupancyField {
    #[serde(skip)]
    pub env: Environment,
    pub p_good: f64,
    pub p_bad: f64,
    pub noise_seed: u64,
    #[serde(skip)]
    good: Threshold,
    #[serde(skip)]
    bad: BadRule,
    #[serde(skip)]
    thin_seed: u64,
}

impl Default for BadRule {
    fn default() -> Self {
        BadRule::Thin(Threshold::Never)
    }
}

impl OccupancyField {
    pub fn new(env: Environment, p_good: f64, p_bad: f64, noise_seed: u64) -> Result<Self> {
        for (name, p) in [("p_good", p_good), ("p_bad", p_bad)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name}={p} outside [0,1]")));
            }
        }
        let bad = if p_bad <= p_good {
            BadRule::Thin(if p_good > 0.0 { Threshold::new(p_bad / p_good) } else { Threshold::Never })
        } else {
            BadRule::Boost(Threshold::new((p_bad - p_good) / (1.0 - p_good)))
        };
        Ok(OccupancyField {
            env,
            p_good,
            p_bad,
            noise_seed,
            good: Threshold::new(p_good),
            bad,
            thin_seed: derive_seed(noise_seed, 0, TAG_THIN),
        })
    }

    /// No bad lines: every row opens with probability p.
    pub fn homogeneous(p: f64, noise_seed: u64) -> Result<Self> {
        let env = Environment::from_gamma(EnvironmentConfig::new(0.0, 3, 1, 0), Vec::new())?;
        OccupancyField::new(env, p, p, noise_seed)
    }

    #[inline]
    pub fn is_bad_row(&self, y: u64) -> bool {
        self.env.is_bad(y)
    }

    /// Good-row draw for lattice word w of row y.
    #[inline]
    pub fn good_word(&self, y: u64, w: i64) -> u64 {
        bernoulli_word(self.noise_seed, y, w as u64, self.good)
    }

    /// Turns the good-row draw into the bad-row state.
    #[inline]
    pub fn bad_word(&self, y: u64, w: i64, good: u64) -> u64 {
        match self.bad {
            BadRule::Thin(t) => good & bernoulli_word(self.thin_seed, y, w as u64, t),
            BadRule::Boost(t) => good | bernoulli_word(self.thin_seed, y, w as u64, t),
        }
    }

    #[inline]
    pub fn word(&self, y: u64, w: i64) -> u64 {
        let g = self.good_word(y, w);
        if self.is_bad_row(y) {
            self.bad_word(y, w, g)
        } else {
            g
        }
    }

    pub fn site_open(&self, x: i64, y: u64) -> Result<bool> {
        if (x + y as i64).rem_euclid(2) != 0 {
            return Err(Error::Parity { x, y: y as i64 });
        }
        let i = (x - (y & 1) as i64) / 2;
        Ok((self.word(y, i.div_euclid(64)) >> i.rem_euclid(64)) & 1 == 1)
    }

    /// Open sites of row y with x in [x0, x1]; bit (x − x0) of the result.
    pub fn row_bits(&self, y: u64, x0: i64, x1: i64) -> Vec<u64> {
        if x1 < x0 {
            return Vec::new();
        }
        let n = (x1 - x0 + 1) as usize;
        let mut out = vec![0u64; n.div_ceil(64)];
        let p = (y & 1) as i64;
        let first = x0 + (x0 - p).rem_euclid(2);
        if first > x1 {
            return out;
        }
        let i0 = (first - p) / 2;
        let i1 = (x1 - p).div_euclid(2);
        let mut w = i0.div_euclid(64);
        let mut cached = self.word(y, w);
        for i in i0..=i1 {
            let wi = i.div_euclid(64);
            if wi != w {
                w = wi;
                cached = self.word(y, w);
            }
            if (cached >> i.rem_euclid(64)) & 1 == 1 {
                let b = (2 * i + p - x0) as usize;
                out[b / 64] |= 1 << (b % 64);
            }
        }
        out
    }
}
