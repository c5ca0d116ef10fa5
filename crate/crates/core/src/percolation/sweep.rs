//! Row-by-row exploration of open clusters.

use serde::Serialize;

use super::field::OccupancyField;
use crate::sites::Rect;

/// Reached lattice indices of one row, as words starting at word `base`.
#[derive(Clone, Debug, Default)]
pub(crate) struct RowSet {
    pub base: i64,
    pub words: Vec<u64>,
}

impl RowSet {
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn insert(&mut self, i: i64) {
        let w = i.div_euclid(64);
        if self.words.is_empty() {
            self.base = w;
            self.words.push(0);
        }
        if w < self.base {
            let add = (self.base - w) as usize;
            self.words.splice(0..0, std::iter::repeat(0).take(add));
            self.base = w;
        }
        let idx = (w - self.base) as usize;
        if idx >= self.words.len() {
            self.words.resize(idx + 1, 0);
        }
        self.words[idx] |= 1 << i.rem_euclid(64);
    }

    pub fn trim(&mut self) {
        let lead = self.words.iter().take_while(|&&w| w == 0).count();
        if lead == self.words.len() {
            self.words.clear();
            return;
        }
        self.words.drain(..lead);
        self.base += lead as i64;
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    pub fn min_index(&self) -> Option<i64> {
        self.words.iter().enumerate().find(|(_, &w)| w != 0).map(|(k, w)| (self.base + k as i64) * 64 + w.trailing_zeros() as i64)
    }

    pub fn max_index(&self) -> Option<i64> {
        self.words.iter().enumerate().rev().find(|(_, &w)| w != 0).map(|(k, w)| (self.base + k as i64) * 64 + 63 - w.leading_zeros() as i64)
    }

    pub fn indices(&self) -> Vec<i64> {
        let mut v = Vec::new();
        for (k, &w) in self.words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let b = w.trailing_zeros() as i64;
                v.push((self.base + k as i64) * 64 + b);
                w &= w - 1;
            }
        }
        v
    }

    /// Candidate children on row y + 1 of the sites on row y.
    pub fn spread(&self, y: u64) -> RowSet {
        let n = self.words.len();
        let mut out = vec![0u64; n + 2];
        let get = |k: isize| if k < 0 || k as usize >= n { 0 } else { self.words[k as usize] };
        // out[k] holds word (base − 1 + k)
        for k in 0..n + 2 {
            let src = k as isize - 1;
            let (cur, next, prev) = (get(src), get(src + 1), get(src - 1));
            out[k] = if y & 1 == 0 {
                // child j from parents j and j + 1
                cur | (cur >> 1) | (next << 63)
            } else {
                // child j from parents j and j − 1
                cur | (cur << 1) | (prev >> 63)
            };
        }
        let mut r = RowSet { base: self.base - 1, words: out };
        r.trim();
        r
    }

    pub fn and_open(&mut self, field: &OccupancyField, y: u64) {
        for (k, w) in self.words.iter_mut().enumerate() {
            if *w != 0 {
                *w &= field.word(y, self.base + k as i64);
            }
        }
    }

    /// Keeps sites with x in [x0, x1] on row y.
    pub fn clip_x(&mut self, y: u64, x0: i64, x1: i64) {
        let p = (y & 1) as i64;
        let i0 = -((-(x0 - p)).div_euclid(2));
        let i1 = (x1 - p).div_euclid(2);
        for (k, w) in self.words.iter_mut().enumerate() {
            let lo = (self.base + k as i64) * 64;
            let hi = lo + 63;
            if hi < i0 || lo > i1 {
                *w = 0;
                continue;
            }
            if lo < i0 {
                *w &= !0u64 << (i0 - lo);
            }
            if hi > i1 {
                *w &= !0u64 >> (hi - i1);
            }
        }
        self.trim();
    }
}

#[inline]
pub(crate) fn index_of(x: i64, y: u64) -> i64 {
    (x - (y & 1) as i64).div_euclid(2)
}

#[inline]
pub(crate) fn x_of(i: i64, y: u64) -> i64 {
    2 * i + (y & 1) as i64
}

#[derive(Clone, Debug, Serialize)]
pub struct OpenCluster {
    pub sources: Vec<(i64, u64)>,
    pub start_row: u64,
    /// Sorted reached x per row, from `start_row` on.
    pub reached: Vec<Vec<i64>>,
    /// Last row offset n with a reached site.
    pub depth_reached: u64,
    pub region: Option<Rect>,
}

impl OpenCluster {
    pub fn contains(&self, x: i64, y: u64) -> bool {
        y >= self.start_row && self.reached.get((y - self.start_row) as usize).map_or(false, |r| r.binary_search(&x).is_ok())
    }
    pub fn size(&self) -> usize {
        self.reached.iter().map(|r| r.len()).sum()
    }
}

/// r_n = max reached x and l_n = −min reached x on row start + n.
#[derive(Clone, Debug, Serialize)]
pub struct FrontierStats {
    pub r: Vec<Option<i64>>,
    pub l: Vec<Option<i64>>,
    pub survived: Vec<bool>,
}

/// Sweeps upward from the sources. Sources are roots: they belong to the
/// cluster whatever their own state, and paths continue through open sites.
pub fn open_cluster(field: &OccupancyField, sources: &[(i64, u64)], max_depth: u64, region: Option<Rect>) -> (OpenCluster, FrontierStats) {
    let mut src: Vec<(i64, u64)> = sources.iter().copied().filter(|&(x, y)| (x + y as i64).rem_euclid(2) == 0).collect();
    src.sort_by_key(|&(x, y)| (y, x));
    src.dedup();
    let start = src.first().map_or(0, |s| s.1);
    let mut cl = OpenCluster { sources: src.clone(), start_row: start, reached: Vec::new(), depth_reached: 0, region };
    let mut fs = FrontierStats { r: Vec::new(), l: Vec::new(), survived: Vec::new() };
    let mut cur = RowSet::default();
    let mut next_src = 0;
    for n in 0..=max_depth {
        let y = start + n;
        if n > 0 {
            cur = cur.spread(y - 1);
            cur.and_open(field, y);
        }
        while next_src < src.len() && src[next_src].1 == y {
            cur.insert(index_of(src[next_src].0, y));
            next_src += 1;
        }
        if let Some(r) = region {
            if y < r.rows.0 || y > r.rows.1 {
                cur.words.clear();
            } else {
                cur.clip_x(y, r.x.0, r.x.1);
            }
        }
        cur.trim();
        let xs: Vec<i64> = cur.indices().into_iter().map(|i| x_of(i, y)).collect();
        fs.r.push(xs.last().copied());
        fs.l.push(xs.first().map(|&x| -x));
        fs.survived.push(!xs.is_empty());
        if !xs.is_empty() {
            cl.depth_reached = n;
        }
        cl.reached.push(xs);
        if cur.is_empty() && next_src >= src.len() {
            break;
        }
    }
    (cl, fs)
}

/// ν_n: sites (x, n) with αn ≤ x ≤ βn reachable from A × {0} inside [−ηn, ηn] × [0, n].
pub fn nu_n(field: &OccupancyField, a: &[i64], n: u64, alpha: f64, beta: f64, eta: f64) -> u64 {
    let nf = n as f64;
    let half = (eta * nf).floor() as i64;
    let region = Rect::new((-half, half), (0, n));
    let src: Vec<(i64, u64)> = a.iter().map(|&x| (x, 0)).collect();
    let (lo, hi) = ((alpha * nf).ceil() as i64, (beta * nf).floor() as i64);
    let mut cur = RowSet::default();
    for &(x, y) in &src {
        if (x + y as i64).rem_euclid(2) == 0 && x.abs() <= half {
            cur.insert(index_of(x, y));
        }
    }
    for y in 1..=n {
        cur = cur.spread(y - 1);
        cur.and_open(field, y);
        cur.clip_x(y, region.x.0, region.x.1);
        if cur.is_empty() {
            return 0;
        }
    }
    cur.indices().into_iter().map(|i| x_of(i, n)).filter(|&x| lo <= x && x <= hi).count() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Paths step (x ± 1, y + 1).
    Up,
    /// Paths step (x ± 1, y − 1), for reversed sites.
    Down,
}

/// Sites reachable by oriented open paths inside a rectangle.
#[derive(Clone, Debug)]
pub struct LocalReach {
    pub rect: Rect,
    pub orient: Orientation,
    rows: Vec<Vec<u64>>,
}

impl LocalReach {
    /// Sources outside the rectangle are ignored; closed sources only count
    /// when `roots` is set.
    pub fn compute(field: &OccupancyField, rect: Rect, orient: Orientation, sources: &[(i64, u64)], roots: bool) -> LocalReach {
        if rect.is_empty() {
            return LocalReach { rect, orient, rows: Vec::new() };
        }
        let width = (rect.x.1 - rect.x.0 + 1) as usize;
        let nw = width.div_ceil(64);
        let nrows = (rect.rows.1 - rect.rows.0 + 1) as usize;
        let mut rows = vec![vec![0u64; nw]; nrows];
        let mut by_row: Vec<Vec<i64>> = vec![Vec::new(); nrows];
        for &(x, y) in sources {
            if rect.contains(x, y) {
                by_row[(y - rect.rows.0) as usize].push(x);
            }
        }
        let order: Vec<usize> = match orient {
            Orientation::Up => (0..nrows).collect(),
            Orientation::Down => (0..nrows).rev().collect(),
        };
        let mut prev: Option<usize> = None;
        for &ri in &order {
            let y = rect.rows.0 + ri as u64;
            let open = field.row_bits(y, rect.x.0, rect.x.1);
            let mut cur = vec![0u64; nw];
            if let Some(pi) = prev {
                let p = &rows[pi];
                for k in 0..nw {
                    let left = (p[k] << 1) | if k > 0 { p[k - 1] >> 63 } else { 0 };
                    let right = (p[k] >> 1) | if k + 1 < nw { p[k + 1] << 63 } else { 0 };
                    cur[k] = (left | right) & open[k];
                }
            }
            for &x in &by_row[ri] {
                let b = (x - rect.x.0) as usize;
                if roots || (open[b / 64] >> (b % 64)) & 1 == 1 {
                    cur[b / 64] |= 1 << (b % 64);
                }
            }
            // drop bits beyond the width
            if width % 64 != 0 {
                cur[nw - 1] &= (1u64 << (width % 64)) - 1;
            }
            rows[ri] = cur;
            prev = Some(ri);
        }
        LocalReach { rect, orient, rows }
    }

    pub fn reached(&self, x: i64, y: u64) -> bool {
        if !self.rect.contains(x, y) || self.rows.is_empty() {
            return false;
        }
        let b = (x - self.rect.x.0) as usize;
        (self.rows[(y - self.rect.rows.0) as usize][b / 64] >> (b % 64)) & 1 == 1
    }

    pub fn row_points(&self, y: u64, x0: i64, x1: i64) -> Vec<i64> {
        let (a, b) = (x0.max(self.rect.x.0), x1.min(self.rect.x.1));
        (a..=b).filter(|&x| self.reached(x, y)).collect()
    }

    pub fn count_in(&self, r: &Rect) -> u64 {
        let c = r.intersect(&self.rect);
        if c.is_empty() {
            return 0;
        }
        let mut n = 0;
        for y in c.rows.0..=c.rows.1 {
            n += self.row_points(y, c.x.0, c.x.1).len() as u64;
        }
        n
    }

    pub fn any(&self) -> bool {
        self.rows.iter().any(|r| r.iter().any(|&w| w != 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Environment, EnvironmentConfig};

    fn field(p: f64, seed: u64) -> OccupancyField {
        OccupancyField::homogeneous(p, seed).unwrap()
    }

    /// Plain set-based oracle.
    fn brute(f: &OccupancyField, src: &[(i64, u64)], depth: u64) -> Vec<Vec<i64>> {
        let mut rows = vec![];
        let mut cur: std::collections::BTreeSet<i64> = src.iter().map(|s| s.0).collect();
        rows.push(cur.iter().copied().collect());
        for y in 1..=depth {
            let mut nxt = std::collections::BTreeSet::new();
            for &x in &cur {
                for c in [x - 1, x + 1] {
                    if f.site_open(c, y).unwrap() {
                        nxt.insert(c);
                    }
                }
            }
            rows.push(nxt.iter().copied().collect());
            cur = nxt;
        }
        rows
    }

    #[test]
    fn all_open_diamond() {
        let f = field(1.0, 0);
        let (c, fs) = open_cluster(&f, &[(0, 0)], 20, None);
        for n in 0..=20u64 {
            assert_eq!(fs.r[n as usize], Some(n as i64));
            assert_eq!(fs.l[n as usize], Some(n as i64));
            assert_eq!(c.reached[n as usize].len() as u64, n + 1);
        }
    }

    #[test]
    fn all_closed_keeps_sources() {
        let f = field(0.0, 0);
        let (c, fs) = open_cluster(&f, &[(0, 0), (4, 0)], 5, None);
        assert_eq!(c.size(), 2);
        assert_eq!(c.depth_reached, 0);
        assert!(!fs.survived[1]);
    }

    #[test]
    fn matches_brute_force() {
        for seed in 0..20 {
            let f = field(0.65, seed);
            let (c, _) = open_cluster(&f, &[(-2, 0), (0, 0), (6, 0)], 40, None);
            let b = brute(&f, &[(-2, 0), (0, 0), (6, 0)], 40);
            for (n, row) in b.iter().enumerate() {
                let got = c.reached.get(n).cloned().unwrap_or_default();
                assert_eq!(&got, row, "seed {seed} row {n}");
            }
        }
    }

    #[test]
    fn hand_grid_five_rows() {
        // Good rows 0..4, bad row 2 with p_bad = 0 blocks everything.
        let env = Environment::from_gamma(EnvironmentConfig::new(0.0, 12, 10, 0), vec![2]).unwrap();
        let f = OccupancyField::new(env, 1.0, 0.0, 1).unwrap();
        let (c, _) = open_cluster(&f, &[(0, 0)], 4, None);
        assert_eq!(c.reached[0], vec![0]);
        assert_eq!(c.reached[1], vec![-1, 1]);
        assert!(c.reached.len() <= 3 || c.reached[2].is_empty());
        assert_eq!(c.depth_reached, 1);
    }

    #[test]
    fn region_clips() {
        let f = field(1.0, 0);
        let (c, _) = open_cluster(&f, &[(0, 0)], 10, Some(Rect::new((-2, 3), (0, 10))));
        assert!(c.reached.iter().flatten().all(|&x| (-2..=3).contains(&x)));
        assert_eq!(c.reached[10], vec![-2, 0, 2]);
    }

    #[test]
    fn nu_n_examples() {
        let f = field(1.0, 0);
        assert_eq!(nu_n(&f, &[0], 50, -1.0, 1.0, 1.0), 51);
        let g = field(0.0, 0);
        assert_eq!(nu_n(&g, &[0], 50, -1.0, 1.0, 1.0), 0);
        let h = field(0.7, 4);
        let a = nu_n(&h, &[0], 200, -0.5, 0.5, 0.5);
        let b = nu_n(&h, &[0], 200, -0.5, 0.5, 1.0);
        let c = nu_n(&h, &[0, 2], 200, -0.5, 0.5, 1.0);
        assert!(a <= b && b <= c);
    }

    #[test]
    fn local_reach_matches_cluster() {
        let f = field(0.7, 9);
        let rect = Rect::new((-10, 12), (3, 40));
        let lr = LocalReach::compute(&f, rect, Orientation::Up, &[(1, 3)], true);
        let (c, _) = open_cluster(&f, &[(1, 3)], 37, Some(rect));
        for y in 3..=40u64 {
            for x in -10..=12i64 {
                if (x + y as i64) % 2 == 0 {
                    assert_eq!(lr.reached(x, y), c.contains(x, y), "({x},{y})");
                }
            }
        }
        // downward sweep from the top is the mirror image
        let down = LocalReach::compute(&f, rect, Orientation::Down, &[(0, 40)], true);
        assert!(down.reached(0, 40));
        for y in 3..40u64 {
            for x in -10..=12i64 {
                if down.reached(x, y) {
                    assert!(f.site_open(x, y).unwrap());
                    assert!(down.reached(x - 1, y + 1) || down.reached(x + 1, y + 1));
                }
            }
        }
    }
}
