//! Renormalized k-sites, their regions, matching pairs, zones and tunnels,
//! segment shrinking and hierarchical sets.

use serde::Serialize;

use crate::clusters::{ClusterHierarchy, ClusterId};
use crate::error::{Error, Result};
use crate::layers::{Direction, LayerKind, LayerStack, Rows};
use crate::report::VerificationReport;

/// Closed lattice rectangle; membership also needs x + y even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rect {
    pub x: (i64, i64),
    pub rows: Rows,
}

impl Rect {
    pub fn new(x: (i64, i64), rows: Rows) -> Self {
        Rect { x, rows }
    }
    pub fn is_empty(&self) -> bool {
        self.x.1 < self.x.0 || self.rows.1 < self.rows.0
    }
    pub fn contains(&self, x: i64, y: u64) -> bool {
        (x + y as i64).rem_euclid(2) == 0 && self.x.0 <= x && x <= self.x.1 && self.rows.0 <= y && y <= self.rows.1
    }
    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.is_empty() || (self.x.0 <= o.x.0 && o.x.1 <= self.x.1 && self.rows.0 <= o.rows.0 && o.rows.1 <= self.rows.1)
    }
    pub fn intersect(&self, o: &Rect) -> Rect {
        Rect { x: (self.x.0.max(o.x.0), self.x.1.min(o.x.1)), rows: (self.rows.0.max(o.rows.0), self.rows.1.min(o.rows.1)) }
    }
    /// Lattice points on row y.
    pub fn points_on_row(&self, y: u64) -> u64 {
        if self.is_empty() || y < self.rows.0 || y > self.rows.1 {
            return 0;
        }
        let p = (y & 1) as i64;
        let first = self.x.0 + (self.x.0 - p).rem_euclid(2);
        if first > self.x.1 {
            0
        } else {
            ((self.x.1 - first) / 2 + 1) as u64
        }
    }
    pub fn point_count(&self) -> u64 {
        if self.is_empty() {
            return 0;
        }
        let n = self.rows.1 - self.rows.0 + 1;
        let first = self.points_on_row(self.rows.0);
        let second = if n > 1 { self.points_on_row(self.rows.0 + 1) } else { 0 };
        n.div_ceil(2) * first + (n / 2) * second
    }
}

/// Site scale: c = 1/c_inv, cL = L / c_inv.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SiteScale {
    pub c_inv: u64,
    #[serde(rename = "L")]
    pub l: u64,
}

impl SiteScale {
    pub fn new(c_inv: u64, l: u64) -> Result<Self> {
        if c_inv == 0 || l % c_inv != 0 {
            return Err(Error::Config(format!("c = 1/{c_inv} needs cL integral with L = {l}")));
        }
        let cl = l / c_inv;
        if cl % 2 != 0 || cl == 0 {
            return Err(Error::Config(format!("cL/2 = {cl}/2 is not a positive integer")));
        }
        Ok(SiteScale { c_inv, l })
    }
    pub fn c(&self) -> f64 {
        1.0 / self.c_inv as f64
    }
    pub fn cl(&self) -> u64 {
        self.l / self.c_inv
    }
    /// Horizontal width (cL)^k of a k-site.
    pub fn width(&self, k: u32) -> Result<i64> {
        (self.cl() as i64)
            .checked_pow(k)
            .ok_or_else(|| Error::OutOfRange(format!("(cL)^{k} overflows")))
    }
}

fn floor_div(a: i128, b: i128) -> i128 {
    a.div_euclid(b)
}
fn ceil_div(a: i128, b: i128) -> i128 {
    -((-a).div_euclid(b))
}

/// Integer points of the real interval [a·W/12, b·W/12].
fn twelfths(a: i64, b: i64, w: i64) -> (i64, i64) {
    let w = w as i128;
    (ceil_div(a as i128 * w, 12) as i64, floor_div(b as i128 * w, 12) as i64)
}

#[derive(Clone, Debug, Serialize)]
pub struct SiteGeometry {
    pub k: u32,
    pub u: i64,
    pub v: u32,
    pub reversed: bool,
    /// Closed integer form of the half-open interval ((u−1)W/2, (u+1)W/2].
    pub x_interval: (i64, i64),
    pub rows: Rows,
    pub kind: LayerKind,
    pub kernel: Option<Rect>,
    pub d_l: Option<Rect>,
    pub d_r: Option<Rect>,
    pub dk_l: Option<Rect>,
    pub dk_r: Option<Rect>,
    pub f: Option<Rect>,
    pub truncated: bool,
    pub provisional: bool,
}

impl SiteGeometry {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x_interval, self.rows)
    }
    pub fn is_good(&self) -> bool {
        self.kind != LayerKind::Bad
    }
    pub fn contains(&self, x: i64, y: u64) -> bool {
        self.rect().contains(x, y)
    }
}

fn x_interval(k: u32, u: i64, scale: &SiteScale) -> Result<(i64, i64)> {
    if k == 0 {
        return Ok((u, u));
    }
    let w = scale.width(k)?;
    let half = w / 2;
    Ok(((u - 1) * half + 1, (u + 1) * half))
}

/// Geometry of S^k_{u,v} (or the reversed Ŝ^k_{u,v} on a reversed stack).
/// For k = 0 the site is the single point (u, v).
pub fn site_geometry(stack: &LayerStack, k: u32, u: i64, v: u32, scale: &SiteScale) -> Result<SiteGeometry> {
    if (u + v as i64).rem_euclid(2) != 0 {
        return Err(Error::Parity { x: u, y: v as i64 });
    }
    if scale.l != stack.l {
        return Err(Error::Consistency(format!("site scale L = {} but stack L = {}", scale.l, stack.l)));
    }
    let reversed = stack.direction == Direction::Reversed;
    if k == 0 {
        let y = v as u64;
        let kind = if stack.gamma.binary_search(&y).is_ok() { LayerKind::Bad } else { LayerKind::GoodType2 };
        let r = Rect::new((u, u), (y, y));
        let good = kind != LayerKind::Bad;
        return Ok(SiteGeometry {
            k,
            u,
            v,
            reversed,
            x_interval: (u, u),
            rows: (y, y),
            kind,
            kernel: good.then_some(r),
            d_l: None,
            d_r: None,
            dk_l: None,
            dk_r: None,
            f: good.then_some(r),
            truncated: false,
            provisional: false,
        });
    }
    if v == 0 {
        return Err(Error::OutOfRange("k-site rows start at v = 1".into()));
    }
    let layer = stack.layer(k, v)?;
    let w = scale.width(k)?;
    let xi = x_interval(k, u, scale)?;
    let good = layer.is_good();
    let dl_x = twelfths(6 * (u - 1) + 1, 6 * u - 4, w);
    let dr_x = twelfths(6 * u + 4, 6 * (u + 1) - 1, w);
    let f_x = twelfths(6 * u - 2, 6 * u + 2, w);
    let rect = |x: (i64, i64), rows: Option<Rows>| rows.filter(|_| good).map(|r| Rect::new(x, r));
    Ok(SiteGeometry {
        k,
        u,
        v,
        reversed,
        x_interval: xi,
        rows: layer.support,
        kind: layer.kind,
        kernel: rect(xi, layer.kernel_rows),
        d_l: rect(dl_x, layer.d_rows),
        d_r: rect(dr_x, layer.d_rows),
        dk_l: rect(dl_x, layer.dk_rows),
        dk_r: rect(dr_x, layer.dk_rows),
        f: rect(f_x, layer.f_rows),
        truncated: layer.truncated,
        provisional: layer.provisional,
    })
}

/// (u, v) of the k-site containing the lattice point (x, y).
pub fn site_of(stack: &LayerStack, k: u32, x: i64, y: u64, scale: &SiteScale) -> Result<(i64, u32)> {
    if (x + y as i64).rem_euclid(2) != 0 {
        return Err(Error::Parity { x, y: y as i64 });
    }
    if k == 0 {
        return Ok((x, y as u32));
    }
    let v = stack
        .view(k)
        .rank_containing(y)
        .ok_or_else(|| Error::OutOfRange(format!("row {y} outside the {k}-layers")))?;
    let w = scale.width(k)? as i128;
    // u − 1 < 2x/W ≤ u + 1, u ≡ v (mod 2)
    let mut u = ceil_div(2 * x as i128 - w, w) as i64;
    if (u - v as i64).rem_euclid(2) != 0 {
        u += 1;
    }
    Ok((u, v))
}

/// Checks that every lattice point of the box lies in exactly the site `site_of` names.
pub fn verify_tiling(stack: &LayerStack, k: u32, scale: &SiteScale, xs: (i64, i64), rows: Rows) -> VerificationReport {
    let mut r = VerificationReport::default();
    for y in rows.0..=rows.1 {
        for x in xs.0..=xs.1 {
            if (x + y as i64).rem_euclid(2) != 0 {
                continue;
            }
            let Ok((u, v)) = site_of(stack, k, x, y, scale) else {
                r.check(false, "site_tiling", || format!("({x},{y})"), || "no site".into());
                continue;
            };
            let inside = site_geometry(stack, k, u, v, scale).map_or(false, |g| g.contains(x, y));
            // the neighbouring sites on the same row must not contain it
            let others = [u - 2, u + 2]
                .iter()
                .filter(|&&w| site_geometry(stack, k, w, v, scale).map_or(false, |g| g.contains(x, y)))
                .count();
            r.check(inside && others == 0, "site_tiling", || format!("k={k} ({x},{y})"), || format!("site ({u},{v})"));
        }
    }
    r
}

/// Checks the interior/boundary relation between a k-site and the (k−1)-sites it meets.
pub fn verify_site_interior(fwd: &LayerStack, k: u32, u: i64, v: u32, scale: &SiteScale) -> Result<VerificationReport> {
    let mut r = VerificationReport::default();
    if k < 2 {
        return Ok(r);
    }
    let s = site_geometry(fwd, k, u, v, scale)?;
    let wsub = scale.width(k - 1)?;
    for y in s.rows.0..=s.rows.1 {
        for x in s.x_interval.0..=s.x_interval.1 {
            if (x + y as i64).rem_euclid(2) != 0 {
                continue;
            }
            let (su, sv) = site_of(fwd, k - 1, x, y, scale)?;
            let sub = site_geometry(fwd, k - 1, su, sv, scale)?;
            let inner = s.rect().contains_rect(&sub.rect());
            if !inner {
                let d = (x - s.x_interval.0).min(s.x_interval.1 - x);
                r.check(d < wsub, "site_boundary_band", || format!("k={k} ({u},{v}) point ({x},{y})"), || format!("distance {d} >= {wsub}"));
            }
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Matching pairs, zones and tunnels

#[derive(Clone, Debug, Serialize)]
pub struct MatchingPair {
    pub k: u32,
    pub bad_cluster: ClusterId,
    /// Bad-layer span.
    pub span: Rows,
    /// Forward site S^k_{(u, i_k − 1)}.
    pub forward: (i64, u32),
    /// Reversed site Ŝ^k sitting directly above the bad layer.
    pub reversed: (i64, u32),
    pub i_k: u32,
    pub i_k_prime: u32,
}

impl MatchingPair {
    pub fn i(&self) -> i64 {
        self.forward.0
    }
    pub fn i_prime(&self) -> i64 {
        self.reversed.0
    }
}

/// All matching pairs across the bad layer of `cluster` at scale k whose forward
/// site index u lies in `u_range`.
pub fn matching_pairs(
    fwd: &LayerStack,
    rev: &LayerStack,
    h: &ClusterHierarchy,
    cluster: ClusterId,
    k: u32,
    scale: &SiteScale,
    u_range: (i64, i64),
) -> Result<Vec<MatchingPair>> {
    let c = h.cluster(cluster)?;
    let (m, ell) = (c.mass, c.level);
    if k + 1 < ell || k + 1 > m {
        return Err(Error::OutOfRange(format!("k = {k} outside [{}, {}] for B({m},{ell})", ell.saturating_sub(1), m - 1)));
    }
    let (below, above, i_k, i_k2) = if k == 0 {
        if c.alpha() == 0 {
            return Err(Error::Domain("bad layer at row 0 has no site below".into()));
        }
        (c.alpha() as u32 - 1, c.omega() as u32 + 1, c.alpha() as u32, c.omega() as u32)
    } else {
        if k > fwd.k_max() || k > rev.k_max() {
            return Err(Error::UnsupportedScale { k, cap: fwd.k_max().min(rev.k_max()) });
        }
        let fv = fwd.view(k);
        let i_k = fv.rank_with_lo(c.alpha()).ok_or_else(|| Error::Consistency(format!("bad layer {:?} not aligned with forward {k}-layers", c.span)))?;
        let i_k2 = fv.rank_with_hi(c.omega()).ok_or_else(|| Error::Consistency(format!("bad layer {:?} not aligned with forward {k}-layers", c.span)))?;
        let above = rev
            .view(k)
            .rank_with_lo(c.omega() + 1)
            .ok_or_else(|| Error::Consistency(format!("no reversed {k}-layer starts at {}", c.omega() + 1)))?;
        if i_k < 2 {
            return Err(Error::Domain("bad layer has no forward layer below".into()));
        }
        (i_k - 1, above, i_k, i_k2)
    };
    let good = |st: &LayerStack, v: u32| -> bool {
        if k == 0 {
            st.gamma.binary_search(&(v as u64)).is_err()
        } else {
            st.layer(k, v).map_or(false, |l| l.is_good())
        }
    };
    if !good(fwd, below) || !good(rev, above) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut u = u_range.0 + (u_range.0 - below as i64).rem_euclid(2);
    while u <= u_range.1 {
        let cands: Vec<i64> = if (u - above as i64).rem_euclid(2) == 0 { vec![u] } else { vec![u - 1, u + 1] };
        for up in cands {
            out.push(MatchingPair { k, bad_cluster: cluster, span: c.span, forward: (u, below), reversed: (up, above), i_k, i_k_prime: i_k2 });
        }
        u += 2;
    }
    let _ = scale;
    Ok(out)
}

/// |j − i| ≥ 2√L, compared exactly.
pub fn separated(a: &MatchingPair, b: &MatchingPair, l: u64) -> bool {
    let d = (a.i() - b.i()).unsigned_abs() as u128;
    d * d >= 4 * l as u128
}

/// Leftmost-first greedy selection of pairwise separated pairs.
pub fn select_separated(pairs: &[MatchingPair], l: u64, limit: usize) -> Vec<MatchingPair> {
    let mut sorted: Vec<&MatchingPair> = pairs.iter().collect();
    sorted.sort_by_key(|p| (p.i(), p.i_prime()));
    let mut out: Vec<MatchingPair> = Vec::new();
    for p in sorted {
        if out.len() >= limit {
            break;
        }
        if out.iter().all(|q| separated(q, p, l)) {
            out.push(p.clone());
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Region {
    pub x: (i64, i64),
    pub rows: Rows,
}

impl Region {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.rows)
    }
}

/// Zone and tunnel of a matching pair. At k = 0 the zone is centred on the
/// point itself: [i − √L, i + √L].
pub fn zone_and_tunnel(pair: &MatchingPair, scale: &SiteScale) -> Result<(Region, Region)> {
    let (i, ip) = (pair.i(), pair.i_prime());
    if (i - ip).abs() > 1 {
        return Err(Error::Domain(format!("not a matching pair: i = {i}, i' = {ip}")));
    }
    let sl = (scale.l as f64).sqrt();
    let rows = pair.span;
    if pair.k == 0 {
        let zone = Region { x: ((i as f64 - sl).ceil() as i64, (i as f64 + sl).floor() as i64), rows };
        let tunnel = if i == ip { Region { x: (i - 1, i), rows } } else { Region { x: (i.min(ip), i.max(ip)), rows } };
        return Ok((zone, tunnel));
    }
    let w = scale.width(pair.k)?;
    let wf = w as f64;
    let zone = Region { x: ((wf * (i as f64 - sl) / 2.0).ceil() as i64, (wf * (i as f64 + sl) / 2.0).floor() as i64), rows };
    let half = w / 2;
    let tunnel = if i == ip {
        Region { x: ((i - 1) * half, (i + 1) * half), rows }
    } else {
        Region { x: (i.min(ip) * half, i.max(ip) * half), rows }
    };
    Ok((zone, tunnel))
}

// ---------------------------------------------------------------------------
// Segments and hierarchical sets

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// I_⤶ or I_⤷ of the segment [a, b].
pub fn shrink(seg: (i64, i64), side: Side) -> Result<(i64, i64)> {
    let (a, b) = seg;
    if b - a < 12 {
        return Err(Error::Domain(format!("segment [{a},{b}] shorter than 12")));
    }
    let q = (b - a) / 12;
    Ok(match side {
        Side::Left => (a + q + 1, a + 2 * q - 1),
        Side::Right => (b - 2 * q + 1, b - q - 1),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Segment {
    pub level: u32,
    /// Position in the genealogy, top index first.
    pub index: Vec<u32>,
    pub row: u64,
    pub x: (i64, i64),
    pub children: Vec<Segment>,
}

impl Segment {
    pub fn count_at(&self, level: u32) -> usize {
        if self.level == level {
            1
        } else {
            self.children.iter().map(|c| c.count_at(level)).sum()
        }
    }
    pub fn flatten(&self) -> Vec<&Segment> {
        let mut v = vec![self];
        for c in &self.children {
            v.extend(c.flatten());
        }
        v
    }
}

/// Forward sets live on top lines (Ψ), reversed ones on bottom lines (ϒ).
#[derive(Clone, Debug, Serialize)]
pub struct HierarchicalSet {
    pub k: u32,
    pub reversed: bool,
    pub root: Segment,
}

impl HierarchicalSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Checks disjointness at equal level and the per-side counts of sub-segments.
/// `min_count(level, row, side)` is the required number of (level−1)-segments
/// inside the side interval of a segment on `row`.
pub fn verify_hierarchical_set(set: &HierarchicalSet, min_count: &dyn Fn(u32, u64, (i64, i64)) -> u64) -> VerificationReport {
    let mut r = VerificationReport::default();
    let all = set.root.flatten();
    r.check(all.iter().filter(|s| s.level == set.k).count() == 1, "hset_unique_top", || format!("k={}", set.k), || "several top segments".into());
    for lvl in 0..set.k {
        let mut segs: Vec<&&Segment> = all.iter().filter(|s| s.level == lvl).collect();
        segs.sort_by_key(|s| (s.row, s.x.0));
        for w in segs.windows(2) {
            let disjoint = w[0].row != w[1].row || w[0].x.1 < w[1].x.0;
            r.check(disjoint, "hset_disjoint", || format!("level {lvl} {:?}", w[1].index), || format!("{:?} meets {:?}", w[0].x, w[1].x));
        }
    }
    for s in all.iter().filter(|s| s.level >= 1) {
        let (Ok(l), Ok(rr)) = (shrink(s.x, Side::Left), shrink(s.x, Side::Right)) else {
            r.check(false, "hset_side_count", || format!("{:?}", s.index), || "segment too short to shrink".into());
            continue;
        };
        let (need_l, need_r) = (min_count(s.level, s.row, l), min_count(s.level, s.row, rr));
        let inside = |iv: (i64, i64)| s.children.iter().filter(|c| iv.0 <= c.x.0 && c.x.1 <= iv.1).count() as u64;
        let (nl, nr) = (inside(l), inside(rr));
        r.check(
            nl >= need_l && nr >= need_r,
            "hset_side_count",
            || format!("level {} {:?}", s.level, s.index),
            || format!("left {nl}/{need_l}, right {nr}/{need_r}"),
        );
        for c in &s.children {
            r.check(s.x.0 <= c.x.0 && c.x.1 <= s.x.1, "hset_nested", || format!("{:?}", c.index), || format!("{:?} outside {:?}", c.x, s.x));
        }
    }
    r
}
