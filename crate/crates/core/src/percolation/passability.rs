//! Rooted seeds, s- and c-passability, dense kernels, hierarchical sets and
//! chaining through level-1 bad layers, for scales up to a small cap.
//!
//! On a reversed stack every notion is mirrored: paths run downwards, a seed's
//! active sites sit one row below its root, and "top line" means bottom line.

use std::collections::{HashSet, VecDeque};

use serde::Serialize;

use super::field::OccupancyField;
use super::sweep::{LocalReach, Orientation};
use crate::clusters::ClusterHierarchy;
use crate::error::{Error, Result};
use crate::layers::{Direction, LayerStack, Rows};
use crate::report::VerificationReport;
use crate::sites::{select_separated, shrink, site_geometry, zone_and_tunnel, HierarchicalSet, MatchingPair, Rect, Segment, Side, SiteGeometry, SiteScale};

/// Shared settings of the predicates.
#[derive(Clone, Copy, Debug)]
pub struct PassCtx<'a> {
    pub stack: &'a LayerStack,
    pub scale: SiteScale,
    /// Density constant ρ ∈ (1/2, 1).
    pub rho: f64,
    /// Highest supported site scale.
    pub cap: u32,
}

impl<'a> PassCtx<'a> {
    pub fn new(stack: &'a LayerStack, scale: SiteScale, rho: f64) -> Result<Self> {
        if !(rho > 0.5 && rho < 1.0) {
            return Err(Error::Config(format!("rho={rho} outside (1/2, 1)")));
        }
        if scale.l != stack.l {
            return Err(Error::Consistency(format!("site scale L = {} but stack L = {}", scale.l, stack.l)));
        }
        Ok(PassCtx { stack, scale, rho, cap: 2 })
    }

    pub fn orientation(&self) -> Orientation {
        match self.stack.direction {
            Direction::Forward => Orientation::Up,
            Direction::Reversed => Orientation::Down,
        }
    }

    fn dir(&self) -> Dir {
        Dir { up: self.stack.direction == Direction::Forward }
    }

    fn check_scale(&self, k: u32) -> Result<()> {
        if k > self.cap || k > self.stack.k_max() {
            return Err(Error::UnsupportedScale { k, cap: self.cap.min(self.stack.k_max()) });
        }
        Ok(())
    }

    /// Required number of (k−1)-sites in a dense region of a k-site.
    /// At k = 1 a region holds only a handful of points, so the count is
    /// ρ times its capacity; above that it is ρcL/12.
    pub fn dense_threshold(&self, k: u32, region: &Rect) -> u64 {
        let want = if k == 1 { self.rho * region.point_count() as f64 } else { self.rho * self.scale.cl() as f64 / 12.0 };
        (want - 1e-9).ceil().max(0.0) as u64
    }
}

/// Path direction helpers.
#[derive(Clone, Copy)]
struct Dir {
    up: bool,
}

impl Dir {
    /// First row of `rows` met by a path.
    fn entry(self, r: Rows) -> u64 {
        if self.up {
            r.0
        } else {
            r.1
        }
    }
    /// Last row of `rows` met by a path: the top line, or bottom when reversed.
    fn exit(self, r: Rows) -> u64 {
        if self.up {
            r.1
        } else {
            r.0
        }
    }
    fn step(self, y: u64, n: u64) -> Option<u64> {
        if self.up {
            Some(y + n)
        } else {
            y.checked_sub(n)
        }
    }
    fn back(self, y: u64, n: u64) -> Option<u64> {
        Dir { up: !self.up }.step(y, n)
    }
    fn rank_step(self, v: u32) -> Option<u32> {
        if self.up {
            Some(v + 1)
        } else {
            v.checked_sub(1)
        }
    }
    fn rank_back(self, v: u32) -> Option<u32> {
        Dir { up: !self.up }.rank_step(v)
    }
    /// The rectangle with one extra row before its entry row.
    fn with_entry_row(self, r: Rect) -> Option<Rect> {
        if self.up {
            Some(Rect::new(r.x, (r.rows.0.checked_sub(1)?, r.rows.1)))
        } else {
            Some(Rect::new(r.x, (r.rows.0, r.rows.1 + 1)))
        }
    }
}

/// A rooted seed. Level 0 is three open points; level k ≥ 1 adds a lower
/// k-site and two upper k-sites above a rooted (k−1)-seed.
#[derive(Clone, Debug, Serialize)]
pub struct Seed {
    pub level: u32,
    pub root: (i64, u64),
    pub active: Vec<(i64, u64)>,
    pub orient: Orientation,
    /// Lower, upper-left and upper-right k-sites as (u, v); empty at level 0.
    pub sites: Vec<(i64, u32)>,
    pub sub: Option<Box<Seed>>,
    /// The next k-site reached through Q_l or Q_r of each upper site, with
    /// that (k−1)-seed: the first links of the seed's open cluster.
    pub exits: Vec<((i64, u32), Seed)>,
}

impl Seed {
    /// Q⁽⁰⁾ with root (x, y) if all three points are open.
    pub fn zero(field: &OccupancyField, root: (i64, u64), orient: Orientation) -> Result<Option<Seed>> {
        let (x, y) = root;
        let ya = match orient {
            Orientation::Up => Some(y + 1),
            Orientation::Down => y.checked_sub(1),
        };
        let Some(ya) = ya else { return Ok(None) };
        let active = vec![(x - 1, ya), (x + 1, ya)];
        if !field.site_open(x, y)? || !field.site_open(x - 1, ya)? || !field.site_open(x + 1, ya)? {
            return Ok(None);
        }
        Ok(Some(Seed { level: 0, root, active, orient, sites: Vec::new(), sub: None, exits: Vec::new() }))
    }
}

/// A (k−1)-site found in a dense region, with its own dense points.
#[derive(Clone, Debug, Serialize)]
pub struct Member {
    /// (x, row) for a 0-site, (u, v) for a higher site.
    pub pos: (i64, u64),
    /// Top line of the member's kernel.
    pub row: u64,
    pub x: (i64, i64),
    pub children: Vec<Member>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PassOutcome {
    pub k: u32,
    pub site: (i64, u32),
    pub passable: bool,
    /// (s2) or (c1).
    pub seeds_found: bool,
    /// (s3) or (c2): the dense kernel.
    pub dense: bool,
    pub q_l: Option<Seed>,
    pub q_r: Option<Seed>,
    pub left: Vec<Member>,
    pub right: Vec<Member>,
    pub threshold: (u64, u64),
    /// First failed condition, if any.
    pub failed: Option<String>,
}

impl PassOutcome {
    fn fail(k: u32, site: (i64, u32), why: &str) -> Self {
        PassOutcome {
            k,
            site,
            passable: false,
            seeds_found: false,
            dense: false,
            q_l: None,
            q_r: None,
            left: Vec::new(),
            right: Vec::new(),
            threshold: (0, 0),
            failed: Some(why.to_string()),
        }
    }
}

enum Entry<'s> {
    Seed(&'s Seed),
    Central,
}

fn geometry(ctx: &PassCtx, k: u32, u: i64, v: u32) -> Result<SiteGeometry> {
    site_geometry(ctx.stack, k, u, v, &ctx.scale)
}

/// (s1): every active site lies one step before the entry row of F, inside F's x-range.
fn adjacent_to_f(d: Dir, g: &SiteGeometry, seed: &Seed) -> bool {
    let Some(f) = g.f else { return false };
    let e = d.entry(f.rows);
    seed.active.iter().all(|&(x, y)| d.step(y, 1) == Some(e) && f.x.0 <= x && x <= f.x.1)
}

/// Sources and search rectangle for a site entered from a seed or from the
/// lowest line of F.
fn sources(ctx: &PassCtx, g: &SiteGeometry, entry: &Entry) -> Option<(Rect, Vec<(i64, u64)>, bool)> {
    let d = ctx.dir();
    match entry {
        Entry::Seed(s) => Some((d.with_entry_row(g.rect())?, s.active.clone(), true)),
        Entry::Central => {
            let f = g.f?;
            let e = d.entry(f.rows);
            let first = f.x.0 + (f.x.0 + e as i64).rem_euclid(2);
            Some((g.rect(), (first..=f.x.1).step_by(2).map(|x| (x, e)).collect(), false))
        }
    }
}

fn check_counts(ctx: &PassCtx, k: u32, g: &SiteGeometry, nl: usize, nr: usize) -> ((u64, u64), bool) {
    let tl = g.dk_l.map_or(u64::MAX, |r| ctx.dense_threshold(k, &r));
    let tr = g.dk_r.map_or(u64::MAX, |r| ctx.dense_threshold(k, &r));
    ((tl, tr), nl as u64 >= tl && nr as u64 >= tr)
}

/// Passability of a good 1-site: 0-seeds in D_l, D_r and dense points in D^K.
fn pass1(field: &OccupancyField, ctx: &PassCtx, g: &SiteGeometry, entry: Entry) -> Result<PassOutcome> {
    let d = ctx.dir();
    let site = (g.u, g.v);
    if !g.is_good() {
        return Ok(PassOutcome::fail(1, site, "site_not_good"));
    }
    if let Entry::Seed(s) = &entry {
        if s.level != 0 {
            return Err(Error::Precondition(format!("a 1-site is entered from a 0-seed, not a {}-seed", s.level)));
        }
        if !adjacent_to_f(d, g, s) {
            return Ok(PassOutcome::fail(1, site, "seed_not_adjacent_to_f"));
        }
    }
    let Some((rect, src, roots)) = sources(ctx, g, &entry) else {
        return Ok(PassOutcome::fail(1, site, "no_entry_row"));
    };
    let reach = LocalReach::compute(field, rect, ctx.orientation(), &src, roots);
    let inner = g.rect();
    let find = |region: Option<Rect>, leftmost: bool| -> Result<Option<Seed>> {
        let Some(r) = region else { return Ok(None) };
        let top = d.exit(r.rows);
        let Some(ry) = d.back(top, 1) else { return Ok(None) };
        let mut xs: Vec<i64> = ((r.x.0 + 1)..=(r.x.1 - 1)).filter(|x| (x + ry as i64).rem_euclid(2) == 0).collect();
        if !leftmost {
            xs.reverse();
        }
        for x in xs {
            if inner.contains(x, ry) && reach.reached(x, ry) {
                if let Some(s) = Seed::zero(field, (x, ry), ctx.orientation())? {
                    return Ok(Some(s));
                }
            }
        }
        Ok(None)
    };
    let q_l = find(g.d_l, true)?;
    let q_r = find(g.d_r, false)?;
    let points = |r: Option<Rect>| -> Vec<Member> {
        let Some(r) = r else { return Vec::new() };
        let mut v = Vec::new();
        for y in r.rows.0..=r.rows.1 {
            for x in reach.row_points(y, r.x.0, r.x.1) {
                v.push(Member { pos: (x, y), row: y, x: (x, x), children: Vec::new() });
            }
        }
        v
    };
    let (left, right) = (points(g.dk_l), points(g.dk_r));
    let (threshold, dense) = check_counts(ctx, 1, g, left.len(), right.len());
    let seeds_found = q_l.is_some() && q_r.is_some();
    let failed = if !seeds_found {
        Some("no_seed_in_dense_region".to_string())
    } else if !dense {
        Some("kernel_not_dense".to_string())
    } else {
        None
    };
    Ok(PassOutcome { k: 1, site, passable: seeds_found && dense, seeds_found, dense, q_l, q_r, left, right, threshold, failed })
}

/// Builds the rooted 1-seed on lower site (u, vl) from a 0-seed at `root`,
/// if the three 1-sites pass in sequence.
fn seed1_at(field: &OccupancyField, ctx: &PassCtx, u: i64, vl: u32, root: (i64, u64)) -> Result<Option<Seed>> {
    let d = ctx.dir();
    let Some(vt) = d.rank_step(vl) else { return Ok(None) };
    let Some(s0) = Seed::zero(field, root, ctx.orientation())? else { return Ok(None) };
    let low = geometry(ctx, 1, u, vl)?;
    let o = pass1(field, ctx, &low, Entry::Seed(&s0))?;
    let (Some(ql), Some(qr)) = (o.q_l.clone(), o.q_r.clone()) else { return Ok(None) };
    if !o.passable {
        return Ok(None);
    }
    let ul = geometry(ctx, 1, u - 1, vt)?;
    let ur = geometry(ctx, 1, u + 1, vt)?;
    let ol = pass1(field, ctx, &ul, Entry::Seed(&ql))?;
    let or = pass1(field, ctx, &ur, Entry::Seed(&qr))?;
    if !ol.passable || !or.passable {
        return Ok(None);
    }
    let Some(vn) = d.rank_step(vt) else { return Ok(None) };
    let exits = vec![
        ((u - 2, vn), ol.q_l.expect("passable")),
        ((u, vn), ol.q_r.expect("passable")),
        ((u, vn), or.q_l.expect("passable")),
        ((u + 2, vn), or.q_r.expect("passable")),
    ];
    let active = exits.iter().flat_map(|(_, s)| s.active.iter().copied()).collect();
    Ok(Some(Seed {
        level: 1,
        root,
        active,
        orient: ctx.orientation(),
        sites: vec![(u, vl), (u - 1, vt), (u + 1, vt)],
        sub: Some(Box::new(s0)),
        exits,
    }))
}

/// Roots of 0-seeds whose active sites are adjacent to F of `g`, left to right.
fn zero_seed_roots(d: Dir, g: &SiteGeometry) -> Vec<(i64, u64)> {
    let Some(f) = g.f else { return Vec::new() };
    let Some(ry) = d.back(d.entry(f.rows), 2) else { return Vec::new() };
    ((f.x.0 + 1)..=(f.x.1 - 1)).filter(|x| (x + ry as i64).rem_euclid(2) == 0).map(|x| (x, ry)).collect()
}

/// The leftmost (or rightmost) rooted 1-seed whose upper sites span the top
/// line of `region`, with root reached inside S².
fn find_seed1(field: &OccupancyField, ctx: &PassCtx, g2: &SiteGeometry, reach: &LocalReach, region: Option<Rect>, leftmost: bool) -> Result<Option<Seed>> {
    let d = ctx.dir();
    let Some(r) = region else { return Ok(None) };
    let view = ctx.stack.view(1);
    let top = d.exit(r.rows);
    let Some(vt) = view.rank_containing(top) else { return Ok(None) };
    if view.support(vt).map(|s| d.exit(s)) != Some(top) {
        return Ok(None);
    }
    let Some(vl) = d.rank_back(vt) else { return Ok(None) };
    let half = ctx.scale.width(1)? / 2;
    let mut us: Vec<i64> = Vec::new();
    let u0 = r.x.0.div_euclid(half) - 2;
    for u in u0..=r.x.1.div_euclid(half) + 2 {
        let span = ((u - 2) * half + 1, (u + 2) * half);
        if (u - vl as i64).rem_euclid(2) == 0 && r.x.0 <= span.0 && span.1 <= r.x.1 {
            us.push(u);
        }
    }
    if !leftmost {
        us.reverse();
    }
    let inner = g2.rect();
    for u in us {
        let low = geometry(ctx, 1, u, vl)?;
        if !low.is_good() || !inner.contains_rect(&low.rect()) {
            continue;
        }
        let mut roots = zero_seed_roots(d, &low);
        if !leftmost {
            roots.reverse();
        }
        for root in roots {
            if !inner.contains(root.0, root.1) || !reach.reached(root.0, root.1) {
                continue;
            }
            if let Some(s) = seed1_at(field, ctx, u, vl, root)? {
                return Ok(Some(s));
            }
        }
    }
    Ok(None)
}

/// Passability of a good 2-site. Dense 1-sites are those of the open
/// cluster of the entry, restricted to Ker(S²) ∩ S̊², lying in D^K.
fn pass2(field: &OccupancyField, ctx: &PassCtx, g: &SiteGeometry, entry: Entry) -> Result<PassOutcome> {
    let d = ctx.dir();
    let site = (g.u, g.v);
    if !g.is_good() {
        return Ok(PassOutcome::fail(2, site, "site_not_good"));
    }
    if let Entry::Seed(s) = &entry {
        if s.level != 1 {
            return Err(Error::Precondition(format!("a 2-site is entered from a 1-seed, not a {}-seed", s.level)));
        }
        if !adjacent_to_f(d, g, s) {
            return Ok(PassOutcome::fail(2, site, "seed_not_adjacent_to_f"));
        }
    }
    let Some((rect, src, roots)) = sources(ctx, g, &entry) else {
        return Ok(PassOutcome::fail(2, site, "no_entry_row"));
    };
    let reach = LocalReach::compute(field, rect, ctx.orientation(), &src, roots);
    let q_l = find_seed1(field, ctx, g, &reach, g.d_l, true)?;
    let q_r = find_seed1(field, ctx, g, &reach, g.d_r, false)?;

    // chain of 1-sites: state = (u, v, entry seed root)
    let kernel = g.kernel.expect("good site has a kernel");
    let mut queue: VecDeque<((i64, u32), Seed)> = VecDeque::new();
    let mut members: Vec<(SiteGeometry, PassOutcome)> = Vec::new();
    let mut seen_state: HashSet<(i64, u32, i64, u64)> = HashSet::new();
    let mut seen_site: HashSet<(i64, u32)> = HashSet::new();
    let view = ctx.stack.view(1);
    let inside = |s: &SiteGeometry| kernel.contains_rect(&s.rect());
    let push_exits = |queue: &mut VecDeque<((i64, u32), Seed)>, s: &SiteGeometry, o: &PassOutcome| {
        if let Some(vn) = d.rank_step(s.v) {
            if let Some(q) = &o.q_l {
                queue.push_back(((s.u - 1, vn), q.clone()));
            }
            if let Some(q) = &o.q_r {
                queue.push_back(((s.u + 1, vn), q.clone()));
            }
        }
    };
    match &entry {
        Entry::Seed(s) => queue.extend(s.exits.iter().cloned()),
        Entry::Central => {
            let f = g.f.expect("good site has F");
            if let Some(vf) = view.rank_containing(d.entry(f.rows)) {
                let half = ctx.scale.width(1)? / 2;
                for u in (f.x.0.div_euclid(half) - 1)..=(f.x.1.div_euclid(half) + 1) {
                    if (u - vf as i64).rem_euclid(2) != 0 {
                        continue;
                    }
                    let s1 = geometry(ctx, 1, u, vf)?;
                    if s1.x_interval.0 < f.x.0 || s1.x_interval.1 > f.x.1 || !inside(&s1) {
                        continue;
                    }
                    let o = pass1(field, ctx, &s1, Entry::Central)?;
                    if o.passable {
                        push_exits(&mut queue, &s1, &o);
                        seen_site.insert((s1.u, s1.v));
                        members.push((s1, o));
                    }
                }
            }
        }
    }
    while let Some(((u, v), seed)) = queue.pop_front() {
        if !seen_state.insert((u, v, seed.root.0, seed.root.1)) {
            continue;
        }
        if view.support(v).is_none() {
            continue;
        }
        let s1 = geometry(ctx, 1, u, v)?;
        if !s1.is_good() || !inside(&s1) {
            continue;
        }
        let o = pass1(field, ctx, &s1, Entry::Seed(&seed))?;
        if !o.passable {
            continue;
        }
        push_exits(&mut queue, &s1, &o);
        if seen_site.insert((u, v)) {
            members.push((s1, o));
        }
    }
    let in_region = |s: &SiteGeometry, r: Option<Rect>| r.is_some_and(|r| s.rows == r.rows && r.x.0 <= s.x_interval.0 && s.x_interval.1 <= r.x.1);
    let as_member = |s: &SiteGeometry, o: &PassOutcome| Member {
        pos: (s.u, s.v as u64),
        row: s.kernel.map_or(d.exit(s.rows), |k| d.exit(k.rows)),
        x: s.x_interval,
        children: o.left.iter().chain(&o.right).cloned().collect(),
    };
    let mut left: Vec<Member> = members.iter().filter(|(s, _)| in_region(s, g.dk_l)).map(|(s, o)| as_member(s, o)).collect();
    let mut right: Vec<Member> = members.iter().filter(|(s, _)| in_region(s, g.dk_r)).map(|(s, o)| as_member(s, o)).collect();
    left.sort_by_key(|m| m.x.0);
    right.sort_by_key(|m| m.x.0);
    let (threshold, dense) = check_counts(ctx, 2, g, left.len(), right.len());
    let seeds_found = q_l.is_some() && q_r.is_some();
    let failed = if !seeds_found {
        Some("no_seed_in_dense_region".to_string())
    } else if !dense {
        Some("kernel_not_dense".to_string())
    } else {
        None
    };
    Ok(PassOutcome { k: 2, site, passable: seeds_found && dense, seeds_found, dense, q_l, q_r, left, right, threshold, failed })
}

fn dispatch(field: &OccupancyField, ctx: &PassCtx, k: u32, u: i64, v: u32, entry: Entry) -> Result<PassOutcome> {
    ctx.check_scale(k)?;
    let g = geometry(ctx, k, u, v)?;
    match k {
        0 => {
            let open = g.is_good() && field.site_open(u, v as u64)?;
            let mut o = PassOutcome::fail(0, (u, v), "site_closed");
            if open {
                o.passable = true;
                o.seeds_found = true;
                o.dense = true;
                o.failed = None;
            }
            Ok(o)
        }
        1 => pass1(field, ctx, &g, entry),
        _ => pass2(field, ctx, &g, entry),
    }
}

/// s-passability of the good k-site (u, v) from a rooted (k−1)-seed. A
/// 0-site is passable iff open.
pub fn s_passable(field: &OccupancyField, ctx: &PassCtx, k: u32, u: i64, v: u32, seed: &Seed) -> Result<PassOutcome> {
    dispatch(field, ctx, k, u, v, Entry::Seed(seed))
}

/// c-passability of the good k-site (u, v): crossings start on the lowest
/// 0-line of F.
pub fn c_passable(field: &OccupancyField, ctx: &PassCtx, k: u32, u: i64, v: u32) -> Result<PassOutcome> {
    dispatch(field, ctx, k, u, v, Entry::Central)
}

/// Condition (s3) when a seed is given, (c2) otherwise.
pub fn dense_kernel(field: &OccupancyField, ctx: &PassCtx, k: u32, u: i64, v: u32, seed: Option<&Seed>) -> Result<bool> {
    let entry = match seed {
        Some(s) => Entry::Seed(s),
        None => Entry::Central,
    };
    Ok(dispatch(field, ctx, k, u, v, entry)?.dense)
}

/// The leftmost rooted (k−1)-seed whose active sites are adjacent to F of
/// the k-site (u, v), for k ∈ {1, 2}.
pub fn rooted_seed_below(field: &OccupancyField, ctx: &PassCtx, k: u32, u: i64, v: u32) -> Result<Option<Seed>> {
    ctx.check_scale(k)?;
    let d = ctx.dir();
    let g = geometry(ctx, k, u, v)?;
    match k {
        1 => {
            for root in zero_seed_roots(d, &g) {
                if let Some(s) = Seed::zero(field, root, ctx.orientation())? {
                    return Ok(Some(s));
                }
            }
            Ok(None)
        }
        2 => {
            let Some(f) = g.f else { return Ok(None) };
            let view = ctx.stack.view(1);
            let Some(vf) = view.rank_containing(d.entry(f.rows)) else { return Ok(None) };
            let (Some(vt), half) = (d.rank_back(vf), ctx.scale.width(1)? / 2) else { return Ok(None) };
            let Some(vl) = d.rank_back(vt) else { return Ok(None) };
            for ul in (f.x.0.div_euclid(half) - 2)..=(f.x.1.div_euclid(half) + 2) {
                if (ul - vl as i64).rem_euclid(2) != 0 {
                    continue;
                }
                let low = geometry(ctx, 1, ul, vl)?;
                if !low.is_good() {
                    continue;
                }
                for root in zero_seed_roots(d, &low) {
                    if let Some(s) = seed1_at(field, ctx, ul, vl, root)? {
                        if adjacent_to_f(d, &g, &s) {
                            return Ok(Some(s));
                        }
                    }
                }
            }
            Ok(None)
        }
        _ => Err(Error::OutOfRange(format!("seeds below {k}-sites are not built"))),
    }
}

/// Checks that an oriented open path joins the root to every active site.
pub fn verify_seed(field: &OccupancyField, seed: &Seed) -> VerificationReport {
    let mut r = VerificationReport::default();
    let (rx, ry) = seed.root;
    for &(ax, ay) in &seed.active {
        let h = ay.abs_diff(ry) as i64;
        let rows = (ry.min(ay), ry.max(ay));
        let reach = LocalReach::compute(field, Rect::new((rx - h, rx + h), rows), seed.orient, &[(rx, ry)], false);
        r.check(reach.reached(ax, ay), "seed_path_to_active", || format!("seed at {:?}", seed.root), || format!("no open path to ({ax},{ay})"));
    }
    r
}

fn label(members: &[Member], level: u32, parent: &[u32]) -> Vec<Segment> {
    let mut sorted: Vec<&Member> = members.iter().collect();
    sorted.sort_by_key(|m| (m.x.0, m.row));
    sorted
        .into_iter()
        .enumerate()
        .map(|(j, m)| {
            let mut index = parent.to_vec();
            index.push(j as u32 + 1);
            let children = if level == 0 { Vec::new() } else { label(&m.children, level - 1, &index) };
            Segment { level, index, row: m.row, x: m.x, children }
        })
        .collect()
}

/// Ψ^k of a good k-site from its c-dense kernel (Υ^k on a reversed stack):
/// the top line of the kernel with the dense sites of every scale below.
/// `None` when the kernel is not c-dense.
pub fn build_hierarchical_set(field: &OccupancyField, ctx: &PassCtx, k: u32, u: i64, v: u32) -> Result<Option<HierarchicalSet>> {
    ctx.check_scale(k)?;
    let reversed = ctx.stack.direction == Direction::Reversed;
    if k == 0 {
        let g = geometry(ctx, 0, u, v)?;
        let root = Segment { level: 0, index: Vec::new(), row: v as u64, x: (u, u), children: Vec::new() };
        return Ok(g.is_good().then_some(HierarchicalSet { k: 0, reversed, root }));
    }
    let o = c_passable(field, ctx, k, u, v)?;
    if !o.dense {
        return Ok(None);
    }
    let g = geometry(ctx, k, u, v)?;
    let kernel = g.kernel.expect("dense site is good");
    let members: Vec<Member> = o.left.into_iter().chain(o.right).collect();
    let root = Segment { level: k, index: Vec::new(), row: ctx.dir().exit(kernel.rows), x: g.x_interval, children: label(&members, k - 1, &[]) };
    Ok(Some(HierarchicalSet { k, reversed, root }))
}

/// Number of (ℓ−1)-segment slots inside `iv` on `row`, times ρ, rounded up:
/// lattice points for ℓ = 1, whole (ℓ−1)-site intervals above that.
pub fn hset_requirement(ctx: &PassCtx, level: u32, row: u64, iv: (i64, i64)) -> u64 {
    let slots = if level <= 1 {
        Rect::new(iv, (row, row)).point_count()
    } else {
        let Ok(w) = ctx.scale.width(level - 1) else { return u64::MAX };
        let half = w / 2;
        let Some(v) = ctx.stack.view(level - 1).rank_containing(row) else { return 0 };
        ((iv.0.div_euclid(half) - 1)..=(iv.1.div_euclid(half) + 1))
            .filter(|&u| (u - v as i64).rem_euclid(2) == 0 && iv.0 <= (u - 1) * half + 1 && (u + 1) * half <= iv.1)
            .count() as u64
    };
    (ctx.rho * slots as f64 - 1e-9).ceil().max(0.0) as u64
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainOutcome {
    pub chained: bool,
    /// Matching 0-pairs available (k = 1 only).
    pub candidates: usize,
    /// The separated pairs tried, as (x, x').
    pub selected: Vec<(i64, i64)>,
    pub witness: Option<(i64, i64)>,
    pub reason: Option<String>,
}

/// Maximal runs of consecutive bad lines inside `span`.
fn monolithic_parts(gamma: &[u64], span: Rows) -> Vec<Rows> {
    let mut parts: Vec<Rows> = Vec::new();
    for &g in gamma.iter().filter(|&&g| span.0 <= g && g <= span.1) {
        match parts.last_mut() {
            Some(p) if p.1 + 1 == g => p.1 = g,
            _ => parts.push((g, g)),
        }
    }
    parts
}

/// Open path through the 1_M block `rows` from a neighbour of (a, below) to
/// a neighbour of (b, above), inside the tunnel of the two points.
fn tunnel_crossing(field: &OccupancyField, a: i64, b: i64, rows: Rows) -> bool {
    let x = if a == b { (a - 1, a) } else { (a.min(b), a.max(b)) };
    let rect = Rect::new(x, rows);
    let src = [(a - 1, rows.0), (a + 1, rows.0)];
    let reach = LocalReach::compute(field, rect, Orientation::Up, &src, false);
    reach.reached(b - 1, rows.1) || reach.reached(b + 1, rows.1)
}

/// Chaining of the 0-points (i, α − 1) and (i′, ω + 1) through a level-1 bad
/// layer whose 1_M parts are `parts`, paths between parts kept in `zone`.
fn chained_points(field: &OccupancyField, i: i64, ip: i64, parts: &[Rows], zone: (i64, i64)) -> Result<bool> {
    let r = parts.len();
    if r == 0 {
        return Err(Error::Domain("bad layer holds no bad line".into()));
    }
    if r == 1 {
        return Ok(tunnel_crossing(field, i, ip, parts[0]));
    }
    // Ŝ(1) above part 1, then alternate S(v) below and Ŝ(v) above part v
    let y1 = parts[0].1 + 1;
    for u1 in [i - 1, i, i + 1] {
        if (u1 + y1 as i64).rem_euclid(2) != 0 || !field.site_open(u1, y1)? || !tunnel_crossing(field, i, u1, parts[0]) {
            continue;
        }
        let near = |x: i64| (x - u1).abs() <= 1;
        let mut tops: Vec<i64> = vec![u1];
        for v in 1..r {
            let (from, to) = (parts[v - 1].1 + 1, parts[v].0 - 1);
            let rect = Rect::new(zone, (from, to));
            let src: Vec<(i64, u64)> = tops.iter().map(|&x| (x, from)).collect();
            let reach = LocalReach::compute(field, rect, Orientation::Up, &src, false);
            let lows: Vec<i64> = (u1 - 1..=u1 + 1).filter(|&x| near(x) && reach.reached(x, to)).collect();
            if v + 1 == r {
                if lows.iter().any(|&x| (x - ip).abs() <= 1 && tunnel_crossing(field, x, ip, parts[v])) {
                    return Ok(true);
                }
                break;
            }
            let yt = parts[v].1 + 1;
            let mut next = Vec::new();
            for x in u1 - 1..=u1 + 1 {
                if (x + yt as i64).rem_euclid(2) != 0 || !field.site_open(x, yt)? {
                    continue;
                }
                if lows.iter().any(|&l| (l - x).abs() <= 1 && tunnel_crossing(field, l, x, parts[v])) {
                    next.push(x);
                }
            }
            if next.is_empty() {
                break;
            }
            tops = next;
        }
    }
    Ok(false)
}

/// Chaining of a matching pair through its level-1 bad layer, for k ∈ {0, 1}.
/// At k = 1 the pair's c-dense hierarchical sets supply matching 0-pairs and
/// the first separated ones are tried.
pub fn chained_monolithic(field: &OccupancyField, fwd: &PassCtx, rev: &PassCtx, h: &ClusterHierarchy, pair: &MatchingPair) -> Result<ChainOutcome> {
    let c = h.cluster(pair.bad_cluster)?;
    if c.level > 1 {
        return Err(Error::Domain(format!("chaining is evaluated for bad layers of level at most 1, got B({},{})", c.mass, c.level)));
    }
    if pair.k > 1 {
        return Err(Error::UnsupportedScale { k: pair.k, cap: 1 });
    }
    let parts = monolithic_parts(&fwd.stack.gamma, c.span);
    let (alpha, omega) = (c.alpha(), c.omega());
    let mut out = ChainOutcome { chained: false, candidates: 0, selected: Vec::new(), witness: None, reason: None };
    if pair.k == 0 {
        let (zone, _) = zone_and_tunnel(pair, &fwd.scale)?;
        out.candidates = 1;
        out.selected.push((pair.i(), pair.i_prime()));
        out.chained = chained_points(field, pair.i(), pair.i_prime(), &parts, zone.x)?;
        if out.chained {
            out.witness = Some((pair.i(), pair.i_prime()));
        }
        return Ok(out);
    }
    let psi = build_hierarchical_set(field, fwd, 1, pair.forward.0, pair.forward.1)?;
    let ups = build_hierarchical_set(field, rev, 1, pair.reversed.0, pair.reversed.1)?;
    let (Some(psi), Some(ups)) = (psi, ups) else {
        out.reason = Some("no_dense_kernel".into());
        return Ok(out);
    };
    if alpha == 0 || psi.root.row != alpha - 1 || ups.root.row != omega + 1 {
        out.reason = Some("sites_not_adjacent_to_bad_layer".into());
        return Ok(out);
    }
    let mut pairs = Vec::new();
    for a in &psi.root.children {
        for b in &ups.root.children {
            if (a.x.0 - b.x.0).abs() <= 1 {
                pairs.push(MatchingPair {
                    k: 0,
                    bad_cluster: pair.bad_cluster,
                    span: c.span,
                    forward: (a.x.0, (alpha - 1) as u32),
                    reversed: (b.x.0, (omega + 1) as u32),
                    i_k: alpha as u32,
                    i_k_prime: omega as u32,
                });
            }
        }
    }
    out.candidates = pairs.len();
    let rho_hat = fwd.rho - 0.5;
    let limit = (rho_hat * fwd.scale.c() / 6.0 * (fwd.scale.l as f64).sqrt() - 1e-9).ceil().max(1.0) as usize;
    for p in select_separated(&pairs, fwd.scale.l, limit) {
        out.selected.push((p.i(), p.i_prime()));
        let (zone, _) = zone_and_tunnel(&p, &fwd.scale)?;
        if chained_points(field, p.i(), p.i_prime(), &parts, zone.x)? {
            out.chained = true;
            out.witness = Some((p.i(), p.i_prime()));
            break;
        }
    }
    Ok(out)
}

/// Side intervals I_⤶, I_⤷ of a segment, for use with hset checks.
pub fn side_intervals(seg: &Segment) -> Option<((i64, i64), (i64, i64))> {
    Some((shrink(seg.x, Side::Left).ok()?, shrink(seg.x, Side::Right).ok()?))
}
