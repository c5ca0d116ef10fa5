//! Multi-scale cluster hierarchy of the bad-line set.
//!
//! Level 0 clusters are single bad lines. A level-(k+1) cluster is the span
//! (intersected with Γ) of a maximal run of at least two C_k clusters of mass
//! ≥ k+1 whose consecutive gaps are < L^{k+1}.

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::report::VerificationReport;

/// Saturating L^k.
#[inline]
pub fn lpow(l: u64, k: u32) -> u64 {
    l.saturating_pow(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClusterId {
    pub level: u32,
    pub rank: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub level: u32,
    pub mass: u32,
    /// Closed interval [α, ω].
    pub span: (u64, u64),
    /// Index range of the points inside the hierarchy's `gamma`.
    #[serde(skip)]
    pub first: usize,
    #[serde(skip)]
    pub last: usize,
    pub constituents: Vec<ClusterId>,
    pub provisional: bool,
}

impl Cluster {
    pub fn alpha(&self) -> u64 {
        self.span.0
    }
    pub fn omega(&self) -> u64 {
        self.span.1
    }
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A run that would merge at level k_max+1 but was not built.
#[derive(Clone, Debug, Serialize)]
pub struct CappedRun {
    pub level: u32,
    pub span: (u64, u64),
    pub members: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterHierarchy {
    #[serde(rename = "L")]
    pub l: u64,
    pub k_max: u32,
    pub window_len: u64,
    #[serde(skip)]
    pub gamma: Vec<u64>,
    /// Clusters by creation level; `created[level][rank]`.
    pub created: Vec<Vec<Cluster>>,
    /// The partitions C_0..C_{k_max}.
    pub levels: Vec<Vec<ClusterId>>,
    pub c_infinity: Vec<ClusterId>,
    /// κ(x) for each point of `gamma`, by index.
    pub kappa: Vec<u32>,
    pub capped_runs: Vec<CappedRun>,
    /// Rows at or above this index may still change when the window grows.
    pub horizon: u64,
}

pub fn build_hierarchy(env: &Environment, k_max: u32) -> Result<ClusterHierarchy> {
    if k_max < 1 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    Ok(build_on(env.gamma.clone(), env.l(), Some(k_max), env.window_len()))
}

/// C_∞ of the restricted configuration Γ ∩ [a, b], merged without a cap.
pub fn restricted(gamma: &[u64], a: u64, b: u64, l: u64) -> ClusterHierarchy {
    let lo = gamma.partition_point(|&x| x < a);
    let hi = gamma.partition_point(|&x| x <= b);
    build_on(gamma[lo..hi].to_vec(), l, None, u64::MAX)
}

fn build_on(gamma: Vec<u64>, l: u64, cap: Option<u32>, window_len: u64) -> ClusterHierarchy {
    let mut created: Vec<Vec<Cluster>> = vec![gamma
        .iter()
        .enumerate()
        .map(|(i, &x)| Cluster {
            id: ClusterId { level: 0, rank: i as u32 },
            level: 0,
            mass: 1,
            span: (x, x),
            first: i,
            last: i,
            constituents: Vec::new(),
            provisional: false,
        })
        .collect()];
    let mut levels: Vec<Vec<ClusterId>> = vec![created[0].iter().map(|c| c.id).collect()];
    let mut capped_runs = Vec::new();
    let mut k = 0u32;
    loop {
        let cur = &levels[k as usize];
        let get = |id: &ClusterId| -> &Cluster { &created[id.level as usize][id.rank as usize] };
        let need = k + 1;
        let runs = find_runs(cur, &get, need, lpow(l, k + 1));
        if let Some(c) = cap {
            if k == c {
                for r in &runs {
                    capped_runs.push(CappedRun {
                        level: c + 1,
                        span: (get(&cur[r.0]).alpha(), get(&cur[r.1]).omega()),
                        members: r.2,
                    });
                }
                break;
            }
        } else if cur.iter().filter(|id| get(id).mass >= need).count() < 2 {
            break;
        }
        let mut new_level = Vec::with_capacity(cur.len());
        let mut born = Vec::new();
        let mut ri = 0usize;
        let mut pos = 0usize;
        while pos < cur.len() {
            if ri < runs.len() && runs[ri].0 == pos {
                let (s, e, _) = runs[ri];
                let a = get(&cur[s]);
                let b = get(&cur[e]);
                let members: Vec<ClusterId> =
                    (s..=e).map(|p| cur[p]).filter(|id| get(id).mass >= need).collect();
                let n = members.len() as u32;
                let mass: u32 = members.iter().map(|id| get(id).mass).sum::<u32>() - k * (n - 1);
                let id = ClusterId { level: k + 1, rank: born.len() as u32 };
                born.push(Cluster {
                    id,
                    level: k + 1,
                    mass,
                    span: (a.alpha(), b.omega()),
                    first: a.first,
                    last: b.last,
                    constituents: if k == 0 { Vec::new() } else { members },
                    provisional: false,
                });
                new_level.push(id);
                pos = e + 1;
                ri += 1;
            } else {
                new_level.push(cur[pos]);
                pos += 1;
            }
        }
        created.push(born);
        levels.push(new_level);
        k += 1;
    }
    let k_max = cap.unwrap_or(k);
    let c_infinity = levels.last().cloned().unwrap_or_default();
    let mut kappa = vec![0u32; gamma.len()];
    for id in &c_infinity {
        let c = &created[id.level as usize][id.rank as usize];
        for kv in &mut kappa[c.first..=c.last] {
            *kv = c.level;
        }
    }
    let mut h = ClusterHierarchy {
        l,
        k_max,
        window_len,
        gamma,
        created,
        levels,
        c_infinity,
        kappa,
        capped_runs,
        horizon: u64::MAX,
    };
    if cap.is_some() {
        h.mark_provisional();
    }
    h
}

/// Maximal runs among clusters of mass ≥ `need` with gaps < `gap`, as
/// (first position, last position, member count) in `cur`; only runs with
/// at least two members.
fn find_runs<'a>(
    cur: &[ClusterId],
    get: &impl Fn(&ClusterId) -> &'a Cluster,
    need: u32,
    gap: u64,
) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    let mut open: Option<(usize, usize, usize)> = None;
    for (p, id) in cur.iter().enumerate() {
        let c = get(id);
        if c.mass < need {
            continue;
        }
        match open {
            Some((s, e, n)) if c.alpha() - get(&cur[e]).omega() < gap => open = Some((s, p, n + 1)),
            _ => {
                if let Some(r) = open {
                    if r.2 >= 2 {
                        runs.push(r);
                    }
                }
                open = Some((p, p, 1));
            }
        }
    }
    if let Some(r) = open {
        if r.2 >= 2 {
            runs.push(r);
        }
    }
    runs
}

impl ClusterHierarchy {
    pub fn cluster(&self, id: ClusterId) -> Result<&Cluster> {
        self.created
            .get(id.level as usize)
            .and_then(|v| v.get(id.rank as usize))
            .ok_or_else(|| Error::OutOfRange(format!("no cluster {id:?}")))
    }

    #[inline]
    pub fn get(&self, id: ClusterId) -> &Cluster {
        &self.created[id.level as usize][id.rank as usize]
    }

    pub fn points(&self, c: &Cluster) -> &[u64] {
        &self.gamma[c.first..=c.last]
    }

    pub fn top_clusters(&self) -> impl Iterator<Item = &Cluster> + '_ {
        self.c_infinity.iter().map(move |&id| self.get(id))
    }

    /// Clusters of C_k (k clamped to k_max) with mass ≥ `min_mass`.
    pub fn heavy(&self, k: u32, min_mass: u32) -> Vec<&Cluster> {
        let k = k.min(self.levels.len() as u32 - 1) as usize;
        self.levels[k].iter().map(|&id| self.get(id)).filter(|c| c.mass >= min_mass).collect()
    }

    pub fn all_clusters(&self) -> impl Iterator<Item = &Cluster> + '_ {
        self.created.iter().flatten()
    }

    /// A cluster near the right edge could absorb unseen lines; so could any
    /// cluster within merging reach of such a cluster. Everything from the
    /// leftmost affected cluster onwards is provisional.
    fn mark_provisional(&mut self) {
        let margin = lpow(self.l, self.k_max + 1);
        let edge = self.window_len.saturating_sub(1);
        let mut horizon = edge.saturating_sub(margin).saturating_add(1);
        if self.window_len <= margin {
            horizon = 0;
        }
        let reach = lpow(self.l, self.k_max);
        let tops: Vec<(u64, u64)> = self.top_clusters().map(|c| c.span).collect();
        for w in tops.windows(2).rev() {
            if w[1].1 < horizon {
                break;
            }
            if w[1].0 - w[0].1 < reach {
                horizon = horizon.min(w[0].0);
            }
        }
        for c in &self.capped_runs {
            horizon = horizon.min(c.span.0);
        }
        self.horizon = horizon;
        for lvl in &mut self.created {
            for c in lvl.iter_mut() {
                c.provisional = c.span.1 >= horizon;
            }
        }
    }

    pub fn kappa_of(&self, x: u64) -> Option<u32> {
        self.gamma.binary_search(&x).ok().map(|i| self.kappa[i])
    }

    /// Masses of all distinct clusters (over all levels) containing point index `i`.
    pub fn chain_masses(&self, i: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut last: Option<ClusterId> = None;
        for lvl in &self.levels {
            let p = lvl.partition_point(|&id| self.get(id).last < i);
            if let Some(&id) = lvl.get(p) {
                let c = self.get(id);
                if c.first <= i && Some(id) != last {
                    out.push(c.mass);
                    last = Some(id);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            level: u32,
            rank: u32,
            mass: u32,
            span: (u64, u64),
            points: &'a [u64],
            constituents: &'a [ClusterId],
            provisional: bool,
            in_c_infinity: bool,
        }
        let top: std::collections::HashSet<ClusterId> = self.c_infinity.iter().copied().collect();
        let rows: Vec<Row> = self
            .all_clusters()
            .map(|c| Row {
                level: c.level,
                rank: c.id.rank,
                mass: c.mass,
                span: c.span,
                points: self.points(c),
                constituents: &c.constituents,
                provisional: c.provisional,
                in_c_infinity: top.contains(&c.id),
            })
            .collect();
        let v = serde_json::json!({
            "L": self.l,
            "k_max": self.k_max,
            "window_len": self.window_len,
            "horizon": self.horizon,
            "capped_runs": self.capped_runs,
            "clusters": rows,
        });
        Ok(serde_json::to_string(&v)?)
    }
}

// ---------------------------------------------------------------------------
// Genealogy

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum GenNode {
    Leaf { mass: u32 },
    Branch { level: u32, children: Vec<GenNode> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GenealogyTree {
    pub root: GenNode,
}

impl GenealogyTree {
    pub fn leaf_masses(&self) -> Vec<u32> {
        fn go(n: &GenNode, out: &mut Vec<u32>) {
            match n {
                GenNode::Leaf { mass } => out.push(*mass),
                GenNode::Branch { children, .. } => children.iter().for_each(|c| go(c, out)),
            }
        }
        let mut v = Vec::new();
        go(&self.root, &mut v);
        v
    }

    /// (level, out-degree) of every branch node.
    pub fn branches(&self) -> Vec<(u32, u32)> {
        fn go(n: &GenNode, out: &mut Vec<(u32, u32)>) {
            if let GenNode::Branch { level, children } = n {
                out.push((*level, children.len() as u32));
                children.iter().for_each(|c| go(c, out));
            }
        }
        let mut v = Vec::new();
        go(&self.root, &mut v);
        v
    }

    /// Σ m_i − Σ (n_j − 1)(ℓ_j − 1).
    pub fn weighted_mass(&self) -> i64 {
        let leaves: i64 = self.leaf_masses().iter().map(|&m| m as i64).sum();
        let b: i64 = self.branches().iter().map(|&(l, n)| (n as i64 - 1) * (l as i64 - 1)).sum();
        leaves - b
    }

    pub fn degree_excess(&self) -> i64 {
        self.branches().iter().map(|&(_, n)| n as i64 - 1).sum()
    }

    pub fn levels_decrease(&self) -> bool {
        fn go(n: &GenNode, parent: Option<u32>) -> bool {
            match n {
                GenNode::Leaf { .. } => true,
                GenNode::Branch { level, children } => {
                    parent.map_or(true, |p| *level < p) && children.iter().all(|c| go(c, Some(*level)))
                }
            }
        }
        go(&self.root, None)
    }
}

pub fn genealogy(h: &ClusterHierarchy, id: ClusterId) -> Result<GenealogyTree> {
    let c = h.cluster(id)?;
    if c.level == 0 {
        return Err(Error::Domain("genealogy is defined for clusters of level >= 1".into()));
    }
    fn expand(h: &ClusterHierarchy, c: &Cluster) -> GenNode {
        if c.level <= 1 {
            GenNode::Leaf { mass: c.mass }
        } else {
            GenNode::Branch {
                level: c.level,
                children: c.constituents.iter().map(|&k| expand(h, h.get(k))).collect(),
            }
        }
    }
    Ok(GenealogyTree { root: expand(h, c) })
}

/// Checks both tree identities on every non-provisional cluster of level ≥ 1.
pub fn verify_genealogy(h: &ClusterHierarchy) -> VerificationReport {
    let mut r = VerificationReport::default();
    for c in h.all_clusters().filter(|c| c.level >= 1 && !c.provisional) {
        let t = genealogy(h, c.id).expect("level >= 1");
        let wm = t.weighted_mass();
        r.check(wm == c.mass as i64, "genealogy_mass", || format!("{:?}", c.id), || format!("tree gives {wm}, mass {}", c.mass));
        let leaves = t.leaf_masses().len() as i64;
        let ex = t.degree_excess();
        r.check(ex == leaves - 1, "genealogy_tree_count", || format!("{:?}", c.id), || format!("sum(n-1)={ex}, leaves={leaves}"));
        r.check(t.levels_decrease(), "genealogy_levels_decrease", || format!("{:?}", c.id), String::new);
    }
    r
}

// ---------------------------------------------------------------------------
// Porous media and descending decompositions

/// Whether [x1, x2] is a porous medium of level k.
pub fn porous_medium(gamma: &[u64], x1: u64, x2: u64, k: u32, l: u64) -> bool {
    if x2 < x1 {
        return true;
    }
    let r = restricted(gamma, x1, x2, l);
    let ok = r.top_clusters().all(|c| {
        let need = lpow(l, c.mass).saturating_sub(1);
        c.mass <= k && c.alpha() - x1 >= need && x2 - c.omega() >= need
    });
    ok
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DescendingDecomposition {
    pub pairs: Vec<(u64, u64)>,
    pub itinerary: Vec<u32>,
}

pub fn descending_decomposition(h: &ClusterHierarchy, id: ClusterId) -> Result<DescendingDecomposition> {
    let c = h.cluster(id)?;
    if c.mass < 2 {
        return Err(Error::Domain("descending decomposition needs mass >= 2".into()));
    }
    let parts = decompose(h, c)?;
    Ok(DescendingDecomposition {
        pairs: parts.iter().map(|p| (p.0, p.1)).collect(),
        itinerary: parts.iter().map(|p| p.2).collect(),
    })
}

fn decompose(h: &ClusterHierarchy, c: &Cluster) -> Result<Vec<(u64, u64, u32)>> {
    let m = c.mass;
    if c.level == 1 {
        let pts = h.points(c);
        return Ok(vec![(pts[0], pts[m as usize - 2], m - 1)]);
    }
    let cs = &c.constituents;
    let r = cs.len();
    let last = h.get(cs[r - 1]);
    let before = h.get(cs[r - 2]);
    let hat = restricted(&h.gamma, h.get(cs[0]).alpha(), before.omega(), h.l);
    if hat.c_infinity.len() != 1 {
        return Err(Error::Consistency(format!("{:?}: leading constituents do not form one cluster", c.id)));
    }
    let hat_mass = hat.get(hat.c_infinity[0]).mass;
    let tail = decompose(h, last)?;
    let mut out = Vec::with_capacity(tail.len() + 1);
    if hat_mass == m - 1 {
        out.push((c.alpha(), before.omega(), m - 1));
        out.extend(tail);
    } else {
        out.push((c.alpha(), tail[0].1, m - 1));
        out.extend_from_slice(&tail[1..]);
    }
    Ok(out)
}

/// Checks the decomposition properties for one cluster.
pub fn verify_decomposition(h: &ClusterHierarchy, id: ClusterId, d: &DescendingDecomposition) -> VerificationReport {
    let mut r = VerificationReport::default();
    let c = h.get(id);
    let subj = || format!("{id:?}");
    let v = d.pairs.len();
    r.check(d.itinerary.first() == Some(&(c.mass - 1)), "itinerary_start", subj, || format!("{:?}", d.itinerary));
    r.check(d.itinerary.windows(2).all(|w| w[0] > w[1]), "itinerary_decreasing", subj, || format!("{:?}", d.itinerary));
    r.check(d.pairs[0].0 == c.alpha(), "decomposition_start", subj, || format!("f1={} alpha={}", d.pairs[0].0, c.alpha()));
    let seq: Vec<u64> = d.pairs.iter().flat_map(|p| [p.0, p.1]).collect();
    let inc = seq.windows(2).enumerate().all(|(i, w)| if i % 2 == 0 { w[0] <= w[1] } else { w[0] < w[1] });
    r.check(inc && d.pairs[v - 1].1 < c.omega(), "decomposition_order", subj, || format!("{:?}", d.pairs));
    for s in 0..v {
        let (f, g) = d.pairs[s];
        let sub = restricted(&h.gamma, f, g, h.l);
        let ok = sub.c_infinity.len() == 1 && {
            let u = sub.get(sub.c_infinity[0]);
            u.mass == d.itinerary[s] && u.span == (f, g)
        };
        r.check(ok, "decomposition_piece", subj, || format!("piece {s} [{f},{g}]"));
        if s >= 1 {
            let gap = f - d.pairs[s - 1].1;
            let ms = d.itinerary[s];
            r.check(
                lpow(h.l, ms) <= gap && gap <= lpow(h.l, ms + 1),
                "decomposition_gap",
                subj,
                || format!("gap {gap} at mass {ms}"),
            );
            r.check(
                porous_medium(&h.gamma, d.pairs[s - 1].1 + 1, f - 1, ms, h.l),
                "decomposition_porous_gap",
                subj,
                || format!("[{}, {}] level {ms}", d.pairs[s - 1].1 + 1, f - 1),
            );
        }
    }
    let gv = d.pairs[v - 1].1;
    let lo = h.gamma.partition_point(|&x| x <= gv);
    let hi = h.gamma.partition_point(|&x| x < c.omega());
    r.check(
        c.omega() < gv + h.l && lo == hi,
        "decomposition_tail",
        subj,
        || format!("g_v={gv} omega={}", c.omega()),
    );
    r
}

// ---------------------------------------------------------------------------
// Structural verification

pub fn verify_hierarchy(h: &ClusterHierarchy) -> VerificationReport {
    let mut r = VerificationReport::default();
    let live = |c: &Cluster| !c.provisional;
    let n = h.gamma.len();
    for (k, lvl) in h.levels.iter().enumerate() {
        // partition of the points, in order, spans disjoint
        let mut next = 0usize;
        let mut prev_omega: Option<u64> = None;
        for &id in lvl {
            let c = h.get(id);
            r.check(c.first == next, "partition", || format!("C_{k} {id:?}"), || format!("starts at point {} expected {next}", c.first));
            next = c.last + 1;
            r.check(
                h.gamma[c.first] == c.alpha() && h.gamma[c.last] == c.omega(),
                "span_endpoints",
                || format!("{id:?}"),
                String::new,
            );
            if let Some(p) = prev_omega {
                r.check(p < c.alpha(), "spans_disjoint", || format!("C_{k} {id:?}"), || format!("previous omega {p}"));
            }
            prev_omega = Some(c.omega());
        }
        r.check(next == n, "partition", || format!("C_{k}"), || format!("covers {next} of {n} points"));
        // spacing among heavy clusters, for every r ≤ k
        for rr in 1..=k as u32 {
            let heavy: Vec<&Cluster> = lvl.iter().map(|&id| h.get(id)).filter(|c| c.mass >= rr).collect();
            for w in heavy.windows(2) {
                if live(w[1]) {
                    let d = w[1].alpha() - w[0].omega();
                    r.check(d >= lpow(h.l, rr), "heavy_spacing", || format!("C_{k} {:?} {:?}", w[0].id, w[1].id), || format!("gap {d} < L^{rr}"));
                }
            }
        }
        // refinement
        if k + 1 < h.levels.len() {
            let up = &h.levels[k + 1];
            let mut j = 0usize;
            for &id in lvl {
                let c = h.get(id);
                while j < up.len() && h.get(up[j]).last < c.first {
                    j += 1;
                }
                let ok = j < up.len() && h.get(up[j]).first <= c.first && c.last <= h.get(up[j]).last;
                r.check(ok, "refinement", || format!("C_{k} {id:?}"), String::new);
            }
        }
    }
    // spacing in C_∞: distinct clusters at distance ≥ L^{min mass}
    let tops: Vec<&Cluster> = h.top_clusters().collect();
    let max_mass = tops.iter().map(|c| c.mass).max().unwrap_or(0);
    for rr in 1..=max_mass {
        let heavy: Vec<&&Cluster> = tops.iter().filter(|c| c.mass >= rr).collect();
        for w in heavy.windows(2) {
            if live(w[1]) {
                let d = w[1].alpha() - w[0].omega();
                r.check(d >= lpow(h.l, rr), "limit_spacing", || format!("{:?} {:?}", w[0].id, w[1].id), || format!("gap {d} < L^{rr}"));
            }
        }
    }
    for c in h.all_clusters().filter(|c| live(c)) {
        let id = c.id;
        r.check(c.mass > c.level, "mass_exceeds_level", || format!("{id:?}"), || format!("m={} level={}", c.mass, c.level));
        if c.level >= 1 {
            r.check(
                c.omega() - c.alpha() <= 3u64.saturating_mul(lpow(h.l, c.mass - 1)),
                "diameter_bound",
                || format!("{id:?}"),
                || format!("diam {} m={}", c.omega() - c.alpha(), c.mass),
            );
            let (expected, count) = if c.level == 1 {
                (c.len() as u32, c.len() as u32)
            } else {
                let ms: Vec<u32> = c.constituents.iter().map(|&k| h.get(k).mass).collect();
                let n = ms.len() as u32;
                (ms.iter().sum::<u32>() - (c.level - 1) * (n - 1), n)
            };
            r.check(expected == c.mass, "mass_attribution", || format!("{id:?}"), || format!("expected {expected}, stored {}", c.mass));
            r.check(count >= 2 && count <= c.mass - c.level + 1, "constituent_count", || format!("{id:?}"), || format!("{count} constituents"));
            if c.level >= 2 {
                for &k in &c.constituents {
                    let s = h.get(k);
                    r.check(s.mass < c.mass, "mass_exceeds_constituents", || format!("{id:?}"), || format!("constituent {k:?} mass {}", s.mass));
                    r.check(s.mass >= c.level && s.level < c.level, "constituent_eligibility", || format!("{id:?}"), || format!("{k:?}"));
                }
                // gaps between consecutive constituents are porous of level ℓ−1
                for w in c.constituents.windows(2) {
                    let (a, b) = (h.get(w[0]), h.get(w[1]));
                    r.check(
                        porous_medium(&h.gamma, a.omega() + 1, b.alpha() - 1, c.level - 1, h.l),
                        "constituent_gap_porous",
                        || format!("{id:?}"),
                        || format!("[{}, {}]", a.omega() + 1, b.alpha() - 1),
                    );
                }
            } else {
                let pts = h.points(c);
                r.check(pts.windows(2).all(|w| w[1] - w[0] < h.l), "run_gaps", || format!("{id:?}"), String::new);
            }
        }
    }
    // consecutive C_∞ clusters of mass ≥ k enclose porous media of level k−1
    for rr in 1..=max_mass {
        let heavy: Vec<&&Cluster> = tops.iter().filter(|c| c.mass >= rr).collect();
        for w in heavy.windows(2) {
            if live(w[1]) {
                r.check(
                    porous_medium(&h.gamma, w[0].omega() + 1, w[1].alpha() - 1, rr - 1, h.l),
                    "limit_gap_porous",
                    || format!("{:?} {:?}", w[0].id, w[1].id),
                    || format!("level {}", rr - 1),
                );
            }
        }
    }
    // κ and mass-chain distinctness
    for (i, &x) in h.gamma.iter().enumerate() {
        if x >= h.horizon {
            break;
        }
        let top = tops.iter().find(|c| c.first <= i && i <= c.last).map(|c| c.level);
        r.check(top == Some(h.kappa[i]), "kappa_level", || format!("point {x}"), String::new);
        let ch = h.chain_masses(i);
        r.check(ch.windows(2).all(|w| w[0] < w[1]), "equal_mass_disjoint", || format!("point {x}"), || format!("{ch:?}"));
    }
    for cr in &h.capped_runs {
        r.note(format!("unmerged at cap: level-{} run of {} clusters over [{}, {}]", cr.level, cr.members, cr.span.0, cr.span.1));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentConfig;

    fn env(gamma: &[u64], l: u64, n: u64) -> Environment {
        Environment::from_gamma(EnvironmentConfig::new(0.0, l, n, 0), gamma.to_vec()).unwrap()
    }

    fn top(h: &ClusterHierarchy) -> Vec<(u32, u32, (u64, u64))> {
        h.top_clusters().map(|c| (c.level, c.mass, c.span)).collect()
    }

    #[test]
    fn hand_trace_level_one() {
        let h = build_hierarchy(&env(&[5, 7, 30], 9, 1_000_000), 3).unwrap();
        assert_eq!(top(&h), vec![(1, 2, (5, 7)), (0, 1, (30, 30))]);
        assert_eq!(h.kappa, vec![1, 1, 0]);
    }

    #[test]
    fn level_two_mass_attribution() {
        // two level-1 mass-2 clusters at gap 20 with L=12 ≤ 20 < 144
        let h = build_hierarchy(&env(&[100, 101, 121, 122], 12, 1_000_000), 3).unwrap();
        assert_eq!(top(&h), vec![(2, 3, (100, 122))]);
        let id = h.c_infinity[0];
        let t = genealogy(&h, id).unwrap();
        assert_eq!(t.branches(), vec![(2, 2)]);
        assert_eq!(t.leaf_masses(), vec![2, 2]);
        assert_eq!(t.weighted_mass(), 3);
        assert!(verify_hierarchy(&h).is_empty());
    }

    #[test]
    fn empty_environment() {
        let h = build_hierarchy(&env(&[], 12, 100), 2).unwrap();
        assert!(h.levels.iter().all(|l| l.is_empty()));
        assert!(h.c_infinity.is_empty());
        assert_eq!(h.kappa_of(3), None);
    }

    #[test]
    fn k_max_must_be_positive() {
        assert!(build_hierarchy(&env(&[], 12, 100), 0).is_err());
    }

    #[test]
    fn genealogy_examples() {
        let h = build_hierarchy(&env(&[10, 11], 12, 1_000_000), 2).unwrap();
        let t = genealogy(&h, h.c_infinity[0]).unwrap();
        assert_eq!(t.root, GenNode::Leaf { mass: 2 });
        assert_eq!(t.weighted_mass(), 2);
        let lvl0 = ClusterId { level: 0, rank: 0 };
        assert!(matches!(genealogy(&h, lvl0), Err(Error::Domain(_))));
    }

    #[test]
    fn provisional_near_edge() {
        // L^{k_max+1} = 144 margin in a 1000 window
        let h = build_hierarchy(&env(&[10, 900], 12, 1000), 1).unwrap();
        let t: Vec<bool> = h.top_clusters().map(|c| c.provisional).collect();
        assert_eq!(t, vec![false, true]);
    }

    #[test]
    fn capped_runs_are_recorded() {
        let h = build_hierarchy(&env(&[100, 101, 121, 122], 12, 1_000_000), 1).unwrap();
        assert_eq!(h.capped_runs.len(), 1);
        let r = verify_hierarchy(&h);
        assert!(r.is_empty());
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn porous_examples() {
        assert!(porous_medium(&[50], 0, 40, 0, 12));
        assert!(!porous_medium(&[5, 6], 0, 40, 1, 12));
        assert!(porous_medium(&[20], 0, 40, 1, 12));
        assert!(!porous_medium(&[5], 0, 40, 1, 12));
    }

    #[test]
    fn decomposition_level_one() {
        let h = build_hierarchy(&env(&[40, 45], 12, 1_000_000), 2).unwrap();
        let d = descending_decomposition(&h, h.c_infinity[0]).unwrap();
        assert_eq!(d.pairs, vec![(40, 40)]);
        assert_eq!(d.itinerary, vec![1]);
        let h = build_hierarchy(&env(&[40, 45, 50, 52], 12, 1_000_000), 2).unwrap();
        let d = descending_decomposition(&h, h.c_infinity[0]).unwrap();
        assert_eq!(d.pairs, vec![(40, 50)]);
        assert_eq!(d.itinerary, vec![3]);
        assert!(verify_decomposition(&h, h.c_infinity[0], &d).is_empty());
    }

    #[test]
    fn decomposition_level_two() {
        let h = build_hierarchy(&env(&[100, 101, 121, 122], 12, 1_000_000), 3).unwrap();
        let id = h.c_infinity[0];
        let d = descending_decomposition(&h, id).unwrap();
        assert_eq!(d.itinerary, vec![2, 1]);
        assert_eq!(d.pairs, vec![(100, 101), (121, 121)]);
        assert!(verify_decomposition(&h, id, &d).is_empty());
        let single = ClusterId { level: 0, rank: 0 };
        assert!(descending_decomposition(&h, single).is_err());
    }

    #[test]
    fn corrupted_mass_is_reported() {
        let mut h = build_hierarchy(&env(&[100, 101, 121, 122], 12, 1_000_000), 3).unwrap();
        h.created[2][0].mass = 4;
        let r = verify_hierarchy(&h);
        assert!(r.has_rule("mass_attribution"), "{:?}", r.violations);
    }
}
