//! Forward and reversed partitions of the rows into k-layers.
//!
//! Scale 0 is implicit: the 0-layer of rank r is the single row r−1.

use serde::Serialize;

use crate::clusters::{lpow, Cluster, ClusterHierarchy, ClusterId};
use crate::environment::{chi, ChiValue, Environment};
use crate::error::{Error, Result};
use crate::report::VerificationReport;

/// Closed row interval. An empty interval has `hi + 1 == lo`.
pub type Rows = (u64, u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    ExceptionalFirst,
    GoodType1,
    GoodType2,
    Bad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reversed,
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerSpec {
    pub scale: u32,
    pub rank: u32,
    pub support: Rows,
    pub kind: LayerKind,
    pub run_index: (u32, u32),
    pub kernel_rows: Option<Rows>,
    pub d_rows: Option<Rows>,
    pub dk_rows: Option<Rows>,
    pub f_rows: Option<Rows>,
    /// The cluster C̃ of a type-1 or bad layer.
    pub cluster: Option<ClusterId>,
    /// Cut at the window's top row.
    pub truncated: bool,
    /// Could change if the window were extended.
    pub provisional: bool,
}

impl LayerSpec {
    pub fn is_good(&self) -> bool {
        self.kind != LayerKind::Bad
    }
    pub fn lo(&self) -> u64 {
        self.support.0
    }
    pub fn hi(&self) -> u64 {
        self.support.1
    }
    pub fn is_empty(&self) -> bool {
        self.support.1 < self.support.0
    }
    /// ω − α as in the height bounds.
    pub fn height(&self) -> i64 {
        self.support.1 as i64 - self.support.0 as i64
    }
    /// Settled: neither truncated nor provisional.
    pub fn settled(&self) -> bool {
        !self.truncated && !self.provisional
    }
}

/// Per-cluster bookkeeping of one scale: the cluster C̃_j, the counts b̃_j and
/// b_j (or b̂_j) of the run that ends at it, and the sub-layer ranks
/// covering its span (i_j, i′_j or h_j, h′_j).
#[derive(Clone, Debug, Serialize)]
pub struct RunInfo {
    pub cluster: ClusterId,
    pub mass: u32,
    pub span: (u64, u64),
    pub b_tilde: u64,
    pub b: u64,
    pub sub_first: Option<u32>,
    pub sub_last: Option<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleLayers {
    pub k: u32,
    pub layers: Vec<LayerSpec>,
    pub runs: Vec<RunInfo>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerStack {
    pub direction: Direction,
    #[serde(rename = "L")]
    pub l: u64,
    pub window_len: u64,
    pub horizon: u64,
    #[serde(skip)]
    pub gamma: Vec<u64>,
    pub per_scale: Vec<ScaleLayers>,
}

/// Uniform read access to the layers of one scale, including scale 0.
#[derive(Clone, Copy)]
pub struct ScaleView<'a> {
    k: u32,
    layers: &'a [LayerSpec],
    gamma: &'a [u64],
    window_len: u64,
}

impl<'a> ScaleView<'a> {
    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn len(&self) -> u32 {
        if self.k == 0 {
            self.window_len as u32
        } else {
            self.layers.len() as u32
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn support(&self, r: u32) -> Option<Rows> {
        if r == 0 || r > self.len() {
            return None;
        }
        if self.k == 0 {
            Some((r as u64 - 1, r as u64 - 1))
        } else {
            Some(self.layers[r as usize - 1].support)
        }
    }
    pub fn lo(&self, r: u32) -> Option<u64> {
        self.support(r).map(|s| s.0)
    }
    pub fn hi(&self, r: u32) -> Option<u64> {
        self.support(r).map(|s| s.1)
    }
    pub fn is_bad(&self, r: u32) -> bool {
        if self.k == 0 {
            self.gamma.binary_search(&(r as u64 - 1)).is_ok()
        } else {
            self.layers[r as usize - 1].kind == LayerKind::Bad
        }
    }
    pub fn settled(&self, r: u32) -> bool {
        self.k == 0 || self.layers.get(r as usize - 1).map_or(false, |l| l.settled())
    }
    pub fn layer(&self, r: u32) -> Option<&'a LayerSpec> {
        if self.k == 0 || r == 0 {
            None
        } else {
            self.layers.get(r as usize - 1)
        }
    }
    /// Rank of the (non-empty) layer containing `row`.
    pub fn rank_containing(&self, row: u64) -> Option<u32> {
        if self.k == 0 {
            return if row < self.window_len { Some(row as u32 + 1) } else { None };
        }
        let p = self.layers.partition_point(|l| l.support.1 < row);
        let l = self.layers.get(p)?;
        (l.support.0 <= row && row <= l.support.1).then_some(p as u32 + 1)
    }
    pub fn rank_with_lo(&self, row: u64) -> Option<u32> {
        let r = self.rank_containing(row)?;
        (self.lo(r)? == row).then_some(r)
    }
    pub fn rank_with_hi(&self, row: u64) -> Option<u32> {
        let r = self.rank_containing(row)?;
        (self.hi(r)? == row).then_some(r)
    }
    /// Ranks of layers whose support lies inside `rows`.
    pub fn ranks_within(&self, rows: Rows) -> std::ops::RangeInclusive<u32> {
        if rows.1 < rows.0 {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        if self.k == 0 {
            let hi = rows.1.min(self.window_len.saturating_sub(1));
            return (rows.0 as u32 + 1)..=(hi as u32 + 1);
        }
        let a = self.layers.partition_point(|l| l.support.0 < rows.0);
        let b = self.layers.partition_point(|l| l.support.1 <= rows.1);
        (a as u32 + 1)..=(b as u32)
    }
}

impl LayerStack {
    pub fn k_max(&self) -> u32 {
        self.per_scale.len() as u32
    }
    pub fn view(&self, k: u32) -> ScaleView<'_> {
        let layers: &[LayerSpec] = if k == 0 { &[] } else { &self.per_scale[k as usize - 1].layers };
        ScaleView { k, layers, gamma: &self.gamma, window_len: self.window_len }
    }
    pub fn scale(&self, k: u32) -> Result<&ScaleLayers> {
        if k == 0 || k > self.k_max() {
            return Err(Error::OutOfRange(format!("scale {k} not built (1..={})", self.k_max())));
        }
        Ok(&self.per_scale[k as usize - 1])
    }
    pub fn layer(&self, k: u32, rank: u32) -> Result<&LayerSpec> {
        self.scale(k)?
            .layers
            .get((rank as usize).wrapping_sub(1))
            .ok_or_else(|| Error::OutOfRange(format!("no {k}-layer of rank {rank}")))
    }
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn check_pre(env: &Environment, h: &ClusterHierarchy) -> Result<()> {
    if h.l < 12 || h.l % 3 != 0 {
        return Err(Error::Precondition(format!("layers need L >= 12 divisible by 3, got {}", h.l)));
    }
    match chi(env, h)? {
        ChiValue::Value { value: 0 } | ChiValue::Unresolved { at_least: 0 } => Ok(()),
        other => Err(Error::Precondition(format!("layers need chi = 0, got {other:?}"))),
    }
}

/// Forward stack for scales 1..=k_max of the hierarchy.
pub fn build_layers(env: &Environment, h: &ClusterHierarchy) -> Result<LayerStack> {
    check_pre(env, h)?;
    let mut st = empty_stack(Direction::Forward, h);
    for k in 1..=h.k_max {
        let sc = if k == 1 { forward_first(h) } else { forward_step(h, st.view(k - 1), k) };
        st.per_scale.push(sc);
    }
    Ok(st)
}

/// Reversed stack; needs the forward stack for the step-k base convention.
pub fn build_reversed_layers(env: &Environment, h: &ClusterHierarchy, fwd: &LayerStack) -> Result<LayerStack> {
    check_pre(env, h)?;
    let mut st = empty_stack(Direction::Reversed, h);
    for k in 1..=h.k_max {
        let sc = if k == 1 { reversed_first(h) } else { reversed_step(h, st.view(k - 1), fwd.view(k - 1), k) };
        st.per_scale.push(sc);
    }
    Ok(st)
}

fn empty_stack(direction: Direction, h: &ClusterHierarchy) -> LayerStack {
    LayerStack { direction, l: h.l, window_len: h.window_len, horizon: h.horizon, gamma: h.gamma.clone(), per_scale: Vec::new() }
}

/// Appends layers in order, cutting at the window top.
struct Emitter {
    k: u32,
    window_len: u64,
    prov_limit: u64,
    margin: u64,
    layers: Vec<LayerSpec>,
    done: bool,
}

struct Aux {
    kernel: Option<Rows>,
    d: Option<Rows>,
    dk: Option<Rows>,
    f: Option<Rows>,
}

const NO_AUX: Aux = Aux { kernel: None, d: None, dk: None, f: None };

impl Emitter {
    fn new(h: &ClusterHierarchy, k: u32) -> Self {
        Emitter {
            k,
            window_len: h.window_len,
            prov_limit: h.horizon.min(h.window_len),
            margin: 2 * lpow(h.l, k),
            layers: Vec::new(),
            done: false,
        }
    }

    fn next_lo(&self) -> u64 {
        self.layers.last().map_or(0, |l| l.support.1 + 1)
    }

    fn push(&mut self, run_index: (u32, u32), support: Rows, kind: LayerKind, aux: Aux, cluster: Option<&Cluster>) {
        if self.done {
            return;
        }
        let top = self.window_len - 1;
        if support.0 > top {
            self.done = true;
            return;
        }
        let truncated = support.1 > top;
        let support = (support.0, support.1.min(top));
        let provisional = truncated || support.1.saturating_add(self.margin) >= self.prov_limit;
        self.layers.push(LayerSpec {
            scale: self.k,
            rank: self.layers.len() as u32 + 1,
            support,
            kind,
            run_index,
            kernel_rows: aux.kernel,
            d_rows: aux.d,
            dk_rows: aux.dk,
            f_rows: aux.f,
            cluster: cluster.map(|c| c.id),
            truncated,
            provisional,
        });
        if support.1 >= top {
            self.done = true;
        }
    }

    /// Fills the rest of the window when a lookup runs off the built sub-layers.
    fn close(&mut self, run_index: (u32, u32)) {
        if !self.done {
            let lo = self.next_lo();
            self.push(run_index, (lo, u64::MAX), LayerKind::GoodType2, NO_AUX, None);
        }
    }

    fn finish(self, runs: Vec<RunInfo>) -> ScaleLayers {
        ScaleLayers { k: self.k, layers: self.layers, runs }
    }
}

fn run_info(c: &Cluster, b_tilde: u64, b: u64, first: Option<u32>, last: Option<u32>) -> RunInfo {
    RunInfo { cluster: c.id, mass: c.mass, span: c.span, b_tilde, b, sub_first: first, sub_last: last }
}

fn forward_first(h: &ClusterHierarchy) -> ScaleLayers {
    let third = h.l / 3;
    let clusters = h.heavy(1, 1);
    let mut e = Emitter::new(h, 1);
    let mut runs = Vec::new();
    e.push((0, 0), (0, 1), LayerKind::ExceptionalFirst, Aux { kernel: Some((0, 1)), d: Some((0, 1)), dk: Some((1, 1)), f: Some((0, 0)) }, None);
    let type2 = |lo: u64, hi: u64| Aux { kernel: Some((lo, hi)), d: Some((hi.saturating_sub(1), hi)), dk: Some((hi, hi)), f: Some((lo, lo)) };
    for j in 0..=clusters.len() {
        if e.done {
            break;
        }
        let base = if j == 0 { 0 } else { clusters[j - 1].omega() };
        let jj = j as u32;
        match clusters.get(j) {
            Some(nc) => {
                let bt = (nc.alpha() - base) / third;
                let big = nc.mass > 1;
                let b = bt + big as u64;
                runs.push(run_info(nc, bt, b, Some(nc.alpha() as u32 + 1), Some(nc.omega() as u32 + 1)));
                for i in 1..b {
                    let hi = if big && i == b - 1 { nc.alpha() - 1 } else { base + i * third };
                    let lo = e.next_lo();
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, type2(lo, hi), None);
                }
                let lo = e.next_lo();
                if big {
                    e.push((jj + 1, 0), nc.span, LayerKind::Bad, NO_AUX, Some(nc));
                } else {
                    let hi = nc.omega() + 3;
                    let aux = Aux {
                        kernel: Some((lo, nc.alpha() - 1)),
                        d: Some((hi - 1, hi)),
                        dk: Some((nc.alpha() - 1, nc.alpha() - 1)),
                        f: Some((lo, lo)),
                    };
                    e.push((jj + 1, 0), (lo, hi), LayerKind::GoodType1, aux, Some(nc));
                }
            }
            None => {
                let mut i = 1u64;
                while !e.done {
                    let lo = e.next_lo();
                    let hi = base + i * third;
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, type2(lo, hi), None);
                    i += 1;
                }
            }
        }
    }
    e.finish(runs)
}

fn forward_step(h: &ClusterHierarchy, sub: ScaleView<'_>, k: u32) -> ScaleLayers {
    let third = lpow(h.l, k) / 3;
    let clusters = h.heavy(k, k);
    let mut e = Emitter::new(h, k);
    let mut runs = Vec::new();
    let lowest = |lo: u64| sub.rank_containing(lo).and_then(|r| sub.support(r));
    let type2 = |lo: u64, s: u32| Aux {
        kernel: None,
        d: match (sub.lo(s.saturating_sub(1)), sub.hi(s)) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        },
        dk: sub.support(s),
        f: lowest(lo),
    };
    let Some(w3) = sub.hi(3) else {
        e.close((0, 0));
        return e.finish(runs);
    };
    let aux0 = Aux { kernel: Some((0, w3)), d: None, dk: sub.support(3), f: sub.support(1) };
    e.push((0, 0), (0, w3), LayerKind::ExceptionalFirst, aux0, None);
    'outer: for j in 0..=clusters.len() {
        if e.done {
            break;
        }
        let base = if j == 0 { 0 } else { clusters[j - 1].omega() };
        let jj = j as u32;
        match clusters.get(j) {
            Some(nc) => {
                let bt = (nc.alpha() - base) / third;
                let big = nc.mass > k;
                let b = bt + big as u64;
                let ij = sub.rank_with_lo(nc.alpha()).or_else(|| sub.rank_containing(nc.alpha()));
                let ij2 = sub.rank_with_hi(nc.omega()).or_else(|| sub.rank_containing(nc.omega()));
                runs.push(run_info(nc, bt, b, ij, ij2));
                for i in 1..b {
                    let s = if big && i == b - 1 {
                        sub.rank_containing(nc.alpha().saturating_sub(1))
                    } else {
                        sub.rank_containing(base + i * third)
                    };
                    let Some(s) = s else {
                        e.close((jj, i as u32));
                        break 'outer;
                    };
                    let hi = if big && i == b - 1 { nc.alpha() - 1 } else { sub.hi(s).unwrap() };
                    let lo = e.next_lo();
                    let mut aux = type2(lo, s);
                    aux.kernel = Some((lo, hi));
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, aux, None);
                }
                let (Some(ij), Some(ij2)) = (ij, ij2) else {
                    e.close((jj + 1, 0));
                    break;
                };
                let lo = e.next_lo();
                if big {
                    let span = (sub.lo(ij).unwrap(), sub.hi(ij2).unwrap());
                    e.push((jj + 1, 0), span, LayerKind::Bad, NO_AUX, Some(nc));
                } else {
                    let Some(hi) = sub.hi(ij + 3) else {
                        e.close((jj + 1, 0));
                        break;
                    };
                    let aux = Aux {
                        kernel: Some((lo, nc.alpha() - 1)),
                        d: sub.lo(ij + 2).map(|a| (a, hi)),
                        dk: sub.support(ij - 1),
                        f: lowest(lo),
                    };
                    e.push((jj + 1, 0), (lo, hi), LayerKind::GoodType1, aux, Some(nc));
                }
            }
            None => {
                let mut i = 1u64;
                while !e.done {
                    let Some(s) = sub.rank_containing(base + i * third) else {
                        e.close((jj, i as u32));
                        break;
                    };
                    let lo = e.next_lo();
                    let hi = sub.hi(s).unwrap();
                    let mut aux = type2(lo, s);
                    aux.kernel = Some((lo, hi));
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, aux, None);
                    if !sub.layer(s).map_or(true, |l| !l.truncated) {
                        break;
                    }
                    i += 1;
                }
            }
        }
    }
    e.close((u32::MAX, 0));
    e.finish(runs)
}

fn reversed_first(h: &ClusterHierarchy) -> ScaleLayers {
    let third = h.l / 3;
    let clusters = h.heavy(1, 1);
    let mut e = Emitter::new(h, 1);
    let mut runs = Vec::new();
    e.push((0, 0), (0, 1), LayerKind::ExceptionalFirst, Aux { kernel: Some((0, 1)), d: Some((0, 1)), dk: Some((0, 0)), f: Some((1, 1)) }, None);
    let type2 = |lo: u64, hi: u64| Aux { kernel: Some((lo, hi)), d: Some((lo, lo + 1)), dk: Some((lo, lo)), f: Some((hi, hi)) };
    for j in 0..=clusters.len() {
        if e.done {
            break;
        }
        let base = if j == 0 { 0 } else { clusters[j - 1].omega() };
        let shift = (j >= 1 && clusters[j - 1].mass == 1) as u64;
        let jj = j as u32;
        match clusters.get(j) {
            Some(nc) => {
                let bt = (nc.alpha() - base) / third;
                let bh = if j == 0 { bt + 1 } else { bt + (clusters[j - 1].mass > 1) as u64 };
                runs.push(run_info(nc, bt, bh, Some(nc.alpha() as u32 + 1), Some(nc.omega() as u32 + 1)));
                let next_lo = if nc.mass == 1 { nc.alpha().saturating_sub(3) } else { nc.alpha() };
                for i in 1..bh {
                    let hi = if i + 2 <= bh { base + (i + shift) * third } else { next_lo.wrapping_sub(1) };
                    let lo = e.next_lo();
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, type2(lo, hi), None);
                }
                if nc.mass == 1 {
                    let hi = nc.omega() + third;
                    let aux = Aux {
                        kernel: Some((nc.omega() + 1, hi)),
                        d: Some((next_lo, next_lo + 1)),
                        dk: Some((nc.omega() + 1, nc.omega() + 1)),
                        f: Some((hi, hi)),
                    };
                    e.push((jj + 1, 0), (next_lo, hi), LayerKind::GoodType1, aux, Some(nc));
                } else {
                    e.push((jj + 1, 0), nc.span, LayerKind::Bad, NO_AUX, Some(nc));
                }
            }
            None => {
                let mut i = 1u64;
                while !e.done {
                    let lo = e.next_lo();
                    let hi = base + (i + shift) * third;
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, type2(lo, hi), None);
                    i += 1;
                }
            }
        }
    }
    e.finish(runs)
}

fn reversed_step(h: &ClusterHierarchy, sub: ScaleView<'_>, fwd_sub: ScaleView<'_>, k: u32) -> ScaleLayers {
    let third = lpow(h.l, k) / 3;
    let clusters = h.heavy(k, k);
    let mut e = Emitter::new(h, k);
    let mut runs = Vec::new();
    let top_sub = |hi: u64| sub.rank_containing(hi).and_then(|r| sub.support(r));
    let bottom_aux = |lo: u64, hi: u64| {
        let s = sub.rank_containing(lo);
        Aux {
            kernel: Some((lo, hi)),
            d: s.and_then(|s| Some((sub.lo(s)?, sub.hi(s + 1)?))),
            dk: s.and_then(|s| sub.support(s)),
            f: top_sub(hi),
        }
    };
    // base convention: the top of the third forward (k−1)-layer
    let Some(w3) = fwd_sub.hi(3) else {
        e.close((0, 0));
        return e.finish(runs);
    };
    e.push((0, 0), (0, w3), LayerKind::ExceptionalFirst, bottom_aux(0, w3), None);
    'outer: for j in 0..=clusters.len() {
        if e.done {
            break;
        }
        let base = if j == 0 { 0 } else { clusters[j - 1].omega() };
        let shift = (j >= 1 && clusters[j - 1].mass == k) as u64;
        let jj = j as u32;
        let s_hat = |i: u64| sub.rank_containing(base + i * third);
        match clusters.get(j) {
            Some(nc) => {
                let bt = (nc.alpha() - base) / third;
                let bh = if j == 0 { bt + 1 } else { bt + (clusters[j - 1].mass > k) as u64 };
                let hj = sub.rank_with_lo(nc.alpha()).or_else(|| sub.rank_containing(nc.alpha()));
                let hj2 = sub.rank_with_hi(nc.omega()).or_else(|| sub.rank_containing(nc.omega()));
                runs.push(run_info(nc, bt, bh, hj, hj2));
                let (Some(hj), Some(hj2)) = (hj, hj2) else {
                    e.close((jj, 1));
                    break;
                };
                let next_lo = if nc.mass == k { sub.lo(hj.saturating_sub(3)) } else { sub.lo(hj) };
                let Some(next_lo) = next_lo else {
                    e.close((jj, 1));
                    break;
                };
                for i in 1..bh {
                    let hi = if i + 2 <= bh {
                        match s_hat(i + shift).and_then(|s| sub.hi(s)) {
                            Some(x) => x,
                            None => {
                                e.close((jj, i as u32));
                                break 'outer;
                            }
                        }
                    } else {
                        next_lo.wrapping_sub(1)
                    };
                    let lo = e.next_lo();
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, bottom_aux(lo, hi), None);
                }
                if nc.mass == k {
                    let Some(hi) = sub.rank_containing(nc.omega() + third).and_then(|s| sub.hi(s)) else {
                        e.close((jj + 1, 0));
                        break;
                    };
                    let lo = next_lo;
                    let b0 = sub.rank_containing(lo);
                    let aux = Aux {
                        kernel: Some((nc.omega() + 1, hi)),
                        d: b0.and_then(|s| Some((sub.lo(s)?, sub.hi(s + 1)?))),
                        dk: sub.support(hj2 + 1),
                        f: top_sub(hi),
                    };
                    e.push((jj + 1, 0), (lo, hi), LayerKind::GoodType1, aux, Some(nc));
                } else {
                    let span = (sub.lo(hj).unwrap(), sub.hi(hj2).unwrap());
                    e.push((jj + 1, 0), span, LayerKind::Bad, NO_AUX, Some(nc));
                }
            }
            None => {
                let mut i = 1u64;
                while !e.done {
                    let Some(s) = s_hat(i + shift) else {
                        e.close((jj, i as u32));
                        break;
                    };
                    let lo = e.next_lo();
                    let hi = sub.hi(s).unwrap();
                    e.push((jj, i as u32), (lo, hi), LayerKind::GoodType2, bottom_aux(lo, hi), None);
                    if sub.layer(s).map_or(false, |l| l.truncated) {
                        break;
                    }
                    i += 1;
                }
            }
        }
    }
    e.close((u32::MAX, 0));
    e.finish(runs)
}

// ---------------------------------------------------------------------------
// Ranks

/// r(k, j, i) = Σ_{l<j} b_{l+1} + i + 1 (forward) or the hatted sum (reversed).
pub fn rank(stack: &LayerStack, k: u32, j: u32, i: u32) -> Result<u32> {
    let sc = stack.scale(k)?;
    let b_next = if (j as usize) < sc.runs.len() { Some(sc.runs[j as usize].b) } else { None };
    if let Some(b) = b_next {
        if i as u64 >= b {
            return Err(Error::OutOfRange(format!("({j},{i}) with b_{} = {b}", j + 1)));
        }
    }
    if j as usize > sc.runs.len() {
        return Err(Error::OutOfRange(format!("no cluster run {j} at scale {k}")));
    }
    let s: u64 = sc.runs[..j as usize].iter().map(|r| r.b).sum();
    Ok((s + i as u64 + 1) as u32)
}

pub fn rank_reversed(stack: &LayerStack, k: u32, j: u32, i: u32) -> Result<u32> {
    if stack.direction != Direction::Reversed {
        return Err(Error::Consistency("rank_reversed needs a reversed stack".into()));
    }
    rank(stack, k, j, i)
}

/// The second form of the rank formulas, written with b̃ and mass indicators.
fn rank_alt(sc: &ScaleLayers, dir: Direction, k: u32, j: usize, i: u64) -> u64 {
    let bt: u64 = sc.runs[..j].iter().map(|r| r.b_tilde).sum();
    match dir {
        Direction::Forward => bt + sc.runs[..j].iter().filter(|r| r.mass > k).count() as u64 + i + 1,
        Direction::Reversed => {
            if j == 0 {
                i + 1
            } else {
                bt + 1 + sc.runs[..j - 1].iter().filter(|r| r.mass > k).count() as u64 + i + 1
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Verification

fn sym_diff(a: Rows, b: Rows) -> u64 {
    let len = |r: Rows| if r.1 < r.0 { 0 } else { r.1 - r.0 + 1 };
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi < lo { 0 } else { hi - lo + 1 };
    len(a) + len(b) - 2 * inter
}

/// Checks the layer lemmas on both stacks. Lemma-dependent checks need L ≥ 108;
/// below that only the construction rules are checked.
pub fn verify_layers(fwd: &LayerStack, rev: &LayerStack, h: &ClusterHierarchy) -> VerificationReport {
    let mut r = VerificationReport::default();
    let lemma = h.l >= 108;
    if !lemma {
        r.note(format!("L = {} < 108: lemma-dependent layer checks skipped", h.l));
    }
    for st in [fwd, rev] {
        for k in 1..=st.k_max() {
            verify_scale(st, h, k, lemma, &mut r);
        }
    }
    for k in 1..=fwd.k_max().min(rev.k_max()) {
        let (f, b) = (fwd.scale(k).unwrap(), rev.scale(k).unwrap());
        let bound = 20 * lpow(h.l, k - 1);
        if lemma {
            for (x, y) in f.layers.iter().zip(&b.layers) {
                if x.settled() && y.settled() {
                    let d = sym_diff(x.support, y.support);
                    r.check(d <= bound, "forward_reversed_difference", || format!("k={k} u={}", x.rank), || format!("|H delta H^| = {d} > {bound}"));
                }
            }
        }
        // the rank shift between the two partitions
        for (jm1, run) in f.runs.iter().enumerate() {
            let j = jm1 + 1;
            let (Some(bf), Some(br)) = (f.runs.get(j).map(|x| x.b), b.runs.get(j).map(|x| x.b)) else { continue };
            let shift = (run.mass == k) as u32;
            for i in 0..bf.min(br) {
                let (Ok(rf), Ok(rr)) = (rank(fwd, k, j as u32, i as u32), rank(rev, k, j as u32, i as u32)) else { continue };
                let settled = fwd.layer(k, rf).map_or(false, |l| l.settled()) && rev.layer(k, rr).map_or(false, |l| l.settled());
                if settled {
                    r.check(rr == rf + shift, "rank_shift", || format!("k={k} (j,i)=({j},{i})"), || format!("r={rf} r^={rr}"));
                }
            }
        }
    }
    r
}

fn verify_scale(st: &LayerStack, h: &ClusterHierarchy, k: u32, lemma: bool, r: &mut VerificationReport) {
    let rev = st.direction == Direction::Reversed;
    let tag = if rev { "reversed " } else { "" };
    let sc = &st.per_scale[k as usize - 1];
    let layers = &sc.layers;
    let sub = st.view(k - 1);
    let lk = lpow(h.l, k);
    let third = lk / 3;
    let subj = |l: &LayerSpec| format!("{tag}k={k} u={}", l.rank);
    let clusters = h.heavy(k, k);

    // partition and contiguity
    r.check(layers.first().map(|l| l.lo()) == Some(0), "layer_contiguity", || format!("{tag}k={k}"), || "first layer must start at row 0".into());
    for w in layers.windows(2) {
        r.check(w[1].lo() == w[0].hi() + 1, "layer_contiguity", || subj(&w[1]), || format!("starts at {} after {}", w[1].lo(), w[0].hi()));
    }
    if let Some(last) = layers.last() {
        r.check(last.hi() == st.window_len - 1, "layer_coverage", || subj(last), || format!("ends at {}", last.hi()));
    }
    for l in layers.iter().filter(|l| l.settled()) {
        if lemma {
            r.check(!l.is_empty(), "layer_nonempty", || subj(l), || format!("{:?}", l.support));
        }
        // nesting for t ≥ 2
        if k >= 2 && !l.is_empty() {
            let ok = sub.rank_with_lo(l.lo()).is_some() && sub.rank_with_hi(l.hi()).is_some();
            r.check(ok, "layer_nesting", || subj(l), || format!("{:?} not a union of {}-layers", l.support, k - 1));
        }
        // positional rank vs closed form
        let (j, i) = l.run_index;
        if (j as usize) <= sc.runs.len() && j != u32::MAX {
            let formula = rank(st, k, j, i).ok();
            r.check(formula == Some(l.rank), "rank_formula", || subj(l), || format!("(j,i)=({j},{i}) formula {formula:?}"));
            if (j as usize) <= sc.runs.len() {
                let alt = rank_alt(sc, st.direction, k, j as usize, i as u64);
                r.check(alt == l.rank as u64, "rank_formula_expanded", || subj(l), || format!("(j,i)=({j},{i}) gives {alt}"));
            }
        }
        // kinds, kernels and auxiliary regions
        let sub_in = sub.ranks_within(l.support);
        let bad_inside = sub_in.clone().filter(|&s| sub.is_bad(s)).count();
        match l.kind {
            LayerKind::GoodType2 => {
                r.check(l.kernel_rows == Some(l.support), "kernel_shape", || subj(l), || format!("{:?}", l.kernel_rows));
                r.check(bad_inside == 0, "type_content", || subj(l), || format!("type 2 holds {bad_inside} bad sublayers"));
            }
            LayerKind::GoodType1 => {
                let c = h.get(l.cluster.unwrap());
                let want = if rev { (c.omega() + 1, l.hi()) } else { (l.lo(), c.alpha() - 1) };
                r.check(l.kernel_rows == Some(want), "kernel_shape", || subj(l), || format!("{:?} vs {want:?}", l.kernel_rows));
                r.check(bad_inside == 1, "type_content", || subj(l), || format!("type 1 holds {bad_inside} bad sublayers"));
                r.check(l.lo() <= c.alpha() && c.omega() <= l.hi(), "cluster_inside_layer", || subj(l), || format!("{:?}", c.span));
            }
            LayerKind::Bad => {
                let c = h.get(l.cluster.unwrap());
                r.check(l.support == c.span && c.mass > k, "bad_layer_span", || subj(l), || format!("{:?} vs {:?}", l.support, c.span));
            }
            LayerKind::ExceptionalFirst => {}
        }
        if let (Some(kr), Some(dk)) = (l.kernel_rows, l.dk_rows) {
            if l.kind != LayerKind::ExceptionalFirst {
                let ok = if rev { kr.0 == dk.0 } else { kr.1 == dk.1 };
                r.check(ok, "kernel_meets_dense_region", || subj(l), || format!("K={kr:?} DK={dk:?}"));
            }
        }
        if l.kind != LayerKind::Bad && !l.is_empty() {
            let want = if k == 1 {
                Some(if rev { (l.hi(), l.hi()) } else { (l.lo(), l.lo()) })
            } else {
                let s = if rev { sub.rank_containing(l.hi()) } else { sub.rank_containing(l.lo()) };
                s.and_then(|s| sub.support(s))
            };
            r.check(l.f_rows == want, "f_region", || subj(l), || format!("{:?} vs {want:?}", l.f_rows));
        }
        if lemma && l.is_good() {
            if let Some(kr) = l.kernel_rows {
                let bad_in_kernel = sub.ranks_within(kr).filter(|&s| sub.is_bad(s)).count();
                r.check(bad_in_kernel == 0, "kernel_sublayers_good", || subj(l), || format!("{bad_in_kernel} bad sublayers in kernel"));
            }
            let ht = l.height();
            if l.rank >= 2 {
                r.check(
                    ht >= (lk / 4) as i64 && ht <= 2 * lk as i64,
                    "layer_height",
                    || subj(l),
                    || format!("height {ht} outside [{}, {}]", lk / 4, 2 * lk),
                );
            } else {
                r.check(ht <= 2 * lk as i64, "layer_height_max", || subj(l), || format!("height {ht}"));
            }
        }
    }
    // each bad layer is followed by two good type-2 layers
    if lemma {
        for (p, l) in layers.iter().enumerate() {
            if l.kind == LayerKind::Bad && l.settled() {
                let next: Vec<_> = layers.iter().skip(p + 1).take(2).collect();
                if next.len() == 2 && next.iter().all(|x| x.settled()) {
                    r.check(next.iter().all(|x| x.kind == LayerKind::GoodType2), "bad_followed_by_type2", || subj(l), || format!("{:?}", next.iter().map(|x| x.kind).collect::<Vec<_>>()));
                }
            }
        }
    }
    // every heavy cluster has its layer
    let mut by_cluster = std::collections::HashMap::new();
    for l in layers.iter().filter(|l| l.cluster.is_some()) {
        by_cluster.insert(l.cluster.unwrap(), l);
    }
    for c in clusters.iter().filter(|c| !c.provisional && c.omega() + 2 * lk < st.horizon.min(st.window_len)) {
        let found = by_cluster.get(&c.id);
        let ok = found.map_or(false, |l| if c.mass > k { l.kind == LayerKind::Bad } else { l.kind == LayerKind::GoodType1 });
        r.check(ok, "cluster_has_layer", || format!("{tag}k={k} {:?}", c.id), || format!("mass {}", c.mass));
    }
    if !lemma {
        return;
    }
    let settled_row = |row: u64| row + 2 * lk < st.horizon.min(st.window_len);
    // bad sublayers stay off the gaps between heavy clusters
    let mut gaps: Vec<Rows> = Vec::new();
    let mut prev = 0u64;
    for c in &clusters {
        if prev + 1 <= c.alpha().saturating_sub(1) && settled_row(c.alpha()) {
            gaps.push((prev + 1, c.alpha() - 1));
        }
        prev = c.omega();
    }
    if clusters.is_empty() {
        gaps.push((1, st.horizon.min(st.window_len).saturating_sub(2 * lk + 1)));
    }
    for g in &gaps {
        if g.1 < g.0 {
            continue;
        }
        let hit = if k == 1 {
            let a = h.gamma.partition_point(|&x| x < g.0);
            let b = h.gamma.partition_point(|&x| x <= g.1);
            b - a
        } else {
            let from = sub.rank_containing(g.0).unwrap_or(1);
            let to = sub.rank_containing(g.1).unwrap_or(0);
            (from..=to).filter(|&s| sub.is_bad(s)).count()
        };
        r.check(hit == 0, "bad_sublayers_off_gaps", || format!("{tag}k={k} gap {g:?}"), || format!("{hit} bad sublayers"));
    }
    // sublayers at the run positions ω(C̃_j) + i·L^k/3 are good
    for j in 0..=clusters.len() {
        let base = if j == 0 { 0 } else { clusters[j - 1].omega() };
        let limit = clusters.get(j).map(|c| (c.alpha() - base) / third).unwrap_or(u64::MAX);
        let mut i = 1u64;
        while i < limit {
            let row = base + i * third;
            if !settled_row(row) {
                break;
            }
            let ok = match sub.rank_containing(row) {
                Some(s) => !sub.is_bad(s),
                None => false,
            };
            r.check(ok, "run_sublayer_good", || format!("{tag}k={k} (j,i)=({j},{i})"), || format!("row {row}"));
            i += 1;
        }
    }
    // mass-k clusters: the L/3 sublayers beside them are good
    for (jm1, run) in sc.runs.iter().enumerate() {
        let c = h.get(run.cluster);
        if c.mass != k || !settled_row(c.omega() + lk) {
            continue;
        }
        let (Some(first), Some(last)) = (run.sub_first, run.sub_last) else { continue };
        let mut bad = 0;
        for ell in 1..=(h.l / 3) as u32 {
            let s = if rev { first.checked_sub(ell) } else { Some(last + ell) };
            if s.map_or(true, |s| s == 0 || s > sub.len() || sub.is_bad(s)) {
                bad += 1;
            }
        }
        r.check(bad == 0, "cluster_neighbour_sublayers_good", || format!("{tag}k={k} j={}", jm1 + 1), || format!("{bad} bad"));
    }
    // the sublayer rank gap between consecutive heavy clusters
    let mut prev_last = 0u32;
    for (jm1, run) in sc.runs.iter().enumerate() {
        let c = h.get(run.cluster);
        if !settled_row(c.omega()) {
            break;
        }
        if let (Some(first), Some(last)) = (run.sub_first, run.sub_last) {
            let gap = first as i64 - prev_last as i64;
            r.check(gap as f64 >= h.l as f64 / 6.0, "sublayer_gap", || format!("{tag}k={k} j={}", jm1 + 1), || format!("gap {gap} < L/6"));
            prev_last = last;
        }
    }
}
