//! Survival from an interval of sources by tracking only the two edges.
//!
//! For sources forming a contiguous run of lattice sites [a, b] on row 0,
//! the reached set on row n is the full-line process restricted to
//! [l_n, r_n], where r_n is the right edge of the process started from
//! every site ≤ b and l_n the left edge of the one started from every site
//! ≥ a. The run is alive at n iff l_m ≤ r_m for all m ≤ n. This follows
//! from planarity: two nearest-neighbour paths on one sublattice cannot
//! cross without sharing a site.
//!
//! Each edge is followed in a window of `K` words. A lower copy treats the
//! sites behind the window as unreached and an upper copy treats them as
//! reached, so the true edge lies between the two. When the copies disagree
//! the caller falls back to a full sweep.

use super::field::OccupancyField;
use super::survival::{Track, TrackEnd};
use super::sweep::{index_of, x_of};

const K: usize = 16;

#[derive(Clone, Copy)]
struct Half {
    right: bool,
    base: i64,
    lo: [u64; K],
    up: [u64; K],
}

fn spread_words(a: &[u64; K], below: u64, above: u64, y: u64) -> [u64; K] {
    let mut out = [0u64; K];
    for k in 0..K {
        let cur = a[k];
        out[k] = if y & 1 == 0 {
            let next = if k + 1 < K { a[k + 1] } else { above };
            cur | (cur >> 1) | (next << 63)
        } else {
            let prev = if k > 0 { a[k - 1] } else { below };
            cur | (cur << 1) | (prev >> 63)
        };
    }
    out
}

impl Half {
    fn new(right: bool, i: i64) -> Half {
        let base = i.div_euclid(64) - (K / 2) as i64;
        let mut lo = [0u64; K];
        for (k, w) in lo.iter_mut().enumerate() {
            let first = 64 * (base + k as i64);
            let b = i - first;
            *w = if right {
                if b >= 63 {
                    !0
                } else if b < 0 {
                    0
                } else {
                    (2u64 << b) - 1
                }
            } else if b <= 0 {
                !0
            } else if b > 63 {
                0
            } else {
                !0 << b
            };
        }
        Half { right, base, lo, up: lo }
    }

    /// Upper-copy padding below and above the window.
    fn pads(&self) -> (u64, u64) {
        if self.right {
            (!0, 0)
        } else {
            (0, !0)
        }
    }

    fn spread(&mut self, y: u64) {
        let (below, above) = self.pads();
        self.lo = spread_words(&self.lo, 0, 0, y);
        self.up = spread_words(&self.up, below, above, y);
    }

    fn apply(&mut self, open: &[u64; K]) {
        for k in 0..K {
            self.lo[k] &= open[k];
            self.up[k] &= open[k];
        }
    }

    /// The edge index when both copies agree.
    fn edge(&self) -> Option<i64> {
        let pick = |a: &[u64; K]| -> Option<i64> {
            if self.right {
                (0..K).rev().find(|&k| a[k] != 0).map(|k| 64 * (self.base + k as i64) + 63 - a[k].leading_zeros() as i64)
            } else {
                (0..K).find(|&k| a[k] != 0).map(|k| 64 * (self.base + k as i64) + a[k].trailing_zeros() as i64)
            }
        };
        match (pick(&self.lo), pick(&self.up)) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }

    fn shift_up(&mut self) {
        let (_, above) = self.pads();
        self.lo.copy_within(1.., 0);
        self.up.copy_within(1.., 0);
        self.lo[K - 1] = 0;
        self.up[K - 1] = above;
        self.base += 1;
    }

    fn shift_down(&mut self) {
        let (below, _) = self.pads();
        self.lo.copy_within(..K - 1, 1);
        self.up.copy_within(..K - 1, 1);
        self.lo[0] = 0;
        self.up[0] = below;
        self.base -= 1;
    }

    /// Keeps the far word on the advancing side empty and most of the
    /// window behind the edge.
    fn recenter(&mut self, e: i64) {
        let half = (K / 2) as i64;
        loop {
            let off = e.div_euclid(64) - self.base;
            if self.right {
                if off >= K as i64 - 1 {
                    self.shift_up();
                } else if off < half - 1 {
                    self.shift_down();
                } else {
                    break;
                }
            } else if off < 1 {
                self.shift_down();
            } else if off > half {
                self.shift_up();
            } else {
                break;
            }
        }
    }
}

/// Word draws of one row, cached per window base so tracks that sit on the
/// same window share them.
struct RowDraws {
    y: u64,
    blocks: Vec<(i64, [u64; K], Option<[u64; K]>)>,
}

impl RowDraws {
    fn get(&mut self, f0: &OccupancyField, base: i64, bad: bool) -> [u64; K] {
        let y = self.y;
        let pos = match self.blocks.iter().position(|b| b.0 == base) {
            Some(p) => p,
            None => {
                let mut g = [0u64; K];
                for (k, w) in g.iter_mut().enumerate() {
                    *w = f0.good_word(y, base + k as i64);
                }
                self.blocks.push((base, g, None));
                self.blocks.len() - 1
            }
        };
        let block = &mut self.blocks[pos];
        if !bad {
            return block.1;
        }
        if block.2.is_none() {
            let mut b = [0u64; K];
            for k in 0..K {
                b[k] = f0.bad_word(y, base + k as i64, block.1[k]);
            }
            block.2 = Some(b);
        }
        block.2.unwrap()
    }
}

/// Contiguous index run of the row-0 sources, if they form one.
fn source_run(t: &Track) -> Option<(i64, i64)> {
    let mut idx: Vec<i64> = t.sources.iter().filter(|x| x.rem_euclid(2) == 0).map(|&x| index_of(x, 0)).collect();
    idx.sort_unstable();
    idx.dedup();
    let (&a, &b) = (idx.first()?, idx.last()?);
    (b - a + 1 == idx.len() as i64).then_some((a, b))
}

/// Edge sweep of every track whose sources form a run. Returns the ends,
/// with `None` for tracks that need a full sweep instead.
pub(crate) fn run_edges(fields: &[OccupancyField], tracks: &[Track], depth: u64) -> Vec<Option<TrackEnd>> {
    let f0 = &fields[0];
    let mut out: Vec<Option<TrackEnd>> = Vec::with_capacity(tracks.len());
    // (track, left edge, right edge)
    let mut live: Vec<(usize, Half, Half)> = Vec::new();
    for (t, tr) in tracks.iter().enumerate() {
        if tr.sources.iter().all(|x| x.rem_euclid(2) != 0) {
            out.push(Some(TrackEnd::default()));
            continue;
        }
        match source_run(tr) {
            Some((a, b)) => {
                let mut end = TrackEnd { last: Some(0), ..Default::default() };
                if depth == 0 {
                    end.final_min = Some(x_of(a, 0));
                    end.final_max = Some(x_of(b, 0));
                } else {
                    live.push((t, Half::new(false, a), Half::new(true, b)));
                }
                out.push(Some(end));
            }
            None => out.push(None),
        }
    }
    let mut draws = RowDraws { y: 0, blocks: Vec::new() };
    for y in 1..=depth {
        if live.is_empty() {
            break;
        }
        draws.y = y;
        draws.blocks.clear();
        live.retain_mut(|(t, l, r)| {
            let bad = fields[tracks[*t].field].is_bad_row(y);
            l.spread(y - 1);
            r.spread(y - 1);
            l.apply(&draws.get(f0, l.base, bad));
            r.apply(&draws.get(f0, r.base, bad));
            let (Some(le), Some(re)) = (l.edge(), r.edge()) else {
                out[*t] = None;
                return false;
            };
            if le > re {
                return false;
            }
            let end = out[*t].as_mut().expect("live track has an end");
            end.last = Some(y);
            if y == depth {
                end.final_min = Some(x_of(le, y));
                end.final_max = Some(x_of(re, y));
                return false;
            }
            l.recenter(le);
            r.recenter(re);
            true
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, EnvironmentConfig};
    use crate::percolation::survival::run_tracks_full;

    fn fields(delta: f64, pg: f64, pb: f64, depth: u64, seed: u64) -> Vec<OccupancyField> {
        [delta, delta * 4.0]
            .iter()
            .map(|&d| {
                let env = sample_environment(&EnvironmentConfig::new(d, 12, depth + 1, seed)).unwrap();
                OccupancyField::new(env, pg, pb, seed ^ 77).unwrap()
            })
            .collect()
    }

    fn tracks() -> Vec<Track> {
        let mut t = Vec::new();
        for field in 0..2 {
            t.push(Track { field, sources: vec![0] });
            t.push(Track { field, sources: vec![-6, -4, -2, 0, 2] });
            t.push(Track { field, sources: (0..70).map(|j| 2 * j + 128).collect() });
            t.push(Track { field, sources: vec![0, 4] });
            t.push(Track { field, sources: vec![1, 3] });
            t.push(Track { field, sources: Vec::new() });
        }
        t
    }

    #[test]
    fn edge_sweep_matches_full_sweep() {
        let mut fallbacks = 0;
        let mut compared = 0;
        for (s, &(pg, pb, delta)) in [(0.62, 0.3, 0.0), (0.66, 0.1, 0.02), (0.75, 0.0, 0.05), (0.95, 0.1, 0.03), (0.7, 0.95, 0.1)]
            .iter()
            .enumerate()
        {
            for depth in [0u64, 1, 7, 300, 3000] {
                let f = fields(delta, pg, pb, depth, s as u64 * 31 + depth);
                let t = tracks();
                let full = run_tracks_full(&f, &t, depth);
                for (k, e) in run_edges(&f, &t, depth).iter().enumerate() {
                    match e {
                        Some(e) => {
                            compared += 1;
                            assert_eq!((e.last, e.final_min, e.final_max), (full[k].last, full[k].final_min, full[k].final_max), "p={pg} depth={depth} track {k}");
                        }
                        None if t[k].sources != [0, 4] => fallbacks += 1,
                        None => {}
                    }
                }
            }
        }
        assert!(compared > 10 * fallbacks, "{compared} compared, {fallbacks} fell back");
    }

    #[test]
    fn spaced_sources_fall_back() {
        let f = fields(0.0, 0.8, 0.8, 50, 1);
        assert!(run_edges(&f, &[Track { field: 0, sources: vec![0, 4] }], 50)[0].is_none());
    }
}
