//! Vertical crossings of the tall rectangle R_a = [0, a] × [0, a²].

use serde::Serialize;

use super::field::OccupancyField;
use super::par_map;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, TAG_FIELD};
use crate::stats::{wilson, Estimate, Z95};

#[derive(Clone, Debug, Serialize)]
pub struct CrossingResult {
    pub a: u64,
    pub p: f64,
    pub reps: u64,
    /// Allowed start points (x, 0) and end points (y, a²).
    pub xs: Vec<i64>,
    pub ys: Vec<i64>,
    /// counts[i][j]: runs with an open path from (xs[i], 0) to (ys[j], a²) inside R_a.
    pub counts: Vec<Vec<u64>>,
    /// The pair closest to (a/2, a/2), ties to the left.
    pub centred: (i64, i64),
    pub centred_estimate: Estimate,
    /// Least frequent pair.
    pub min_pair: (i64, i64),
    pub min_estimate: Estimate,
}

fn allowed(a: u64, parity: u64) -> Vec<i64> {
    // |z − a/2| ≤ a/10, i.e. |10z − 5a| ≤ a
    let a = a as i64;
    (0..=a).filter(|&z| (10 * z - 5 * a).abs() <= a && (z + parity as i64) % 2 == 0).collect()
}

fn nearest(v: &[i64], a: u64) -> i64 {
    *v.iter().min_by_key(|&&z| ((2 * z - a as i64).abs(), z)).expect("nonempty")
}

/// Bits of reached x (bit x) on the top row, starting from (x0, 0), given
/// open bits per row.
fn sweep(open: &[Vec<u64>], x0: i64) -> Vec<u64> {
    let nw = open[0].len();
    let mut cur = vec![0u64; nw];
    cur[(x0 / 64) as usize] = (1 << (x0 % 64)) & open[0][(x0 / 64) as usize];
    for row in &open[1..] {
        let mut next = vec![0u64; nw];
        let mut any = false;
        for k in 0..nw {
            let left = (cur[k] << 1) | if k > 0 { cur[k - 1] >> 63 } else { 0 };
            let right = (cur[k] >> 1) | if k + 1 < nw { cur[k + 1] << 63 } else { 0 };
            next[k] = (left | right) & row[k];
            any |= next[k] != 0;
        }
        cur = next;
        if !any {
            break;
        }
    }
    cur
}

/// Estimates P(V(R_a)) at every allowed (x, y) pair; replica r uses the
/// homogeneous field with seed derived from (seed, r).
pub fn crossing_experiment(p: f64, a: u64, reps: u64, seed: u64) -> Result<CrossingResult> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("p={p} outside [0,1]")));
    }
    if a < 5 {
        return Err(Error::Config(format!("a={a} too small for the crossing rectangle")));
    }
    let top = a * a;
    let xs = allowed(a, 0);
    let ys = allowed(a, top);
    let per_rep: Vec<Vec<bool>> = par_map(reps, |r| {
        let f = OccupancyField::homogeneous(p, derive_seed(seed, r, TAG_FIELD)).expect("checked p");
        let open: Vec<Vec<u64>> = (0..=top).map(|y| f.row_bits(y, 0, a as i64)).collect();
        let mut hits = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            let end = sweep(&open, x);
            for &y in &ys {
                hits.push((end[(y / 64) as usize] >> (y % 64)) & 1 == 1);
            }
        }
        hits
    });
    let mut counts = vec![vec![0u64; ys.len()]; xs.len()];
    for h in &per_rep {
        for i in 0..xs.len() {
            for j in 0..ys.len() {
                counts[i][j] += h[i * ys.len() + j] as u64;
            }
        }
    }
    let (cx, cy) = (nearest(&xs, a), nearest(&ys, a));
    let ci = xs.iter().position(|&x| x == cx).expect("member");
    let cj = ys.iter().position(|&y| y == cy).expect("member");
    let mut best = (0, 0);
    for i in 0..xs.len() {
        for j in 0..ys.len() {
            if counts[i][j] < counts[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    Ok(CrossingResult {
        a,
        p,
        reps,
        centred: (cx, cy),
        centred_estimate: wilson(counts[ci][cj], reps, Z95),
        min_pair: (xs[best.0], ys[best.1]),
        min_estimate: wilson(counts[best.0][best.1], reps, Z95),
        xs,
        ys,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::sweep::{LocalReach, Orientation};
    use crate::sites::Rect;

    #[test]
    fn allowed_points() {
        assert_eq!(allowed(30, 0), vec![12, 14, 16, 18]);
        assert_eq!(allowed(50, 2500), vec![20, 22, 24, 26, 28, 30]);
        assert_eq!(nearest(&allowed(30, 0), 30), 14);
    }

    #[test]
    fn trivial_fields() {
        let r = crossing_experiment(1.0, 10, 3, 0).unwrap();
        assert!(r.counts.iter().flatten().all(|&c| c == 3));
        let r = crossing_experiment(0.0, 10, 3, 0).unwrap();
        assert!(r.counts.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn agrees_with_local_reach() {
        let a = 12u64;
        let r = crossing_experiment(0.8, a, 20, 5).unwrap();
        let mut counts = vec![vec![0u64; r.ys.len()]; r.xs.len()];
        for rep in 0..20 {
            let f = OccupancyField::homogeneous(0.8, derive_seed(5, rep, TAG_FIELD)).unwrap();
            for (i, &x) in r.xs.iter().enumerate() {
                if !f.site_open(x, 0).unwrap() {
                    continue;
                }
                let lr = LocalReach::compute(&f, Rect::new((0, a as i64), (0, a * a)), Orientation::Up, &[(x, 0)], false);
                for (j, &y) in r.ys.iter().enumerate() {
                    counts[i][j] += lr.reached(y, a * a) as u64;
                }
            }
        }
        assert_eq!(counts, r.counts);
    }
}
