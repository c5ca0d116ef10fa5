//! Survival frequencies, θ and edge-speed estimates, and the coupled
//! multi-environment sweep.

use serde::Serialize;

use super::edges::run_edges;
use super::field::OccupancyField;
use super::par_map;
use super::sweep::{index_of, x_of, RowSet};
use crate::environment::{sample_environment, EnvironmentConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, TAG_ENV, TAG_FIELD};
use crate::stats::{mean_ci, wilson, Estimate, Z95};

/// One sweep: sources on row 0 of field `field`.
pub(crate) struct Track {
    pub field: usize,
    pub sources: Vec<i64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct TrackEnd {
    /// Deepest row with a reached site.
    pub last: Option<u64>,
    /// Extreme reached x on the final row when the sweep got to `depth`.
    pub final_min: Option<i64>,
    pub final_max: Option<i64>,
}

impl TrackEnd {
    pub fn survived(&self, depth: u64) -> bool {
        self.last == Some(depth)
    }
}

/// Sweeps several tracks to `depth` at once. All fields must share their
/// noise seed and probabilities, so they differ only in which rows are bad
/// and the word draws can be shared.
pub(crate) fn run_tracks(fields: &[OccupancyField], tracks: &[Track], depth: u64) -> Vec<TrackEnd> {
    let mut ends = run_edges(fields, tracks, depth);
    let rest: Vec<usize> = (0..tracks.len()).filter(|&t| ends[t].is_none()).collect();
    if !rest.is_empty() {
        let sub: Vec<Track> = rest.iter().map(|&t| Track { field: tracks[t].field, sources: tracks[t].sources.clone() }).collect();
        for (&t, e) in rest.iter().zip(run_tracks_full(fields, &sub, depth)) {
            ends[t] = Some(e);
        }
    }
    ends.into_iter().map(|e| e.expect("every track swept")).collect()
}

/// Row-by-row sweep of the whole reached set.
pub(crate) fn run_tracks_full(fields: &[OccupancyField], tracks: &[Track], depth: u64) -> Vec<TrackEnd> {
    let f0 = &fields[0];
    debug_assert!(fields.iter().all(|f| f.noise_seed == f0.noise_seed && f.p_good == f0.p_good && f.p_bad == f0.p_bad));
    let mut cur: Vec<RowSet> = tracks
        .iter()
        .map(|t| {
            let mut r = RowSet::default();
            for &x in &t.sources {
                if x.rem_euclid(2) == 0 {
                    r.insert(index_of(x, 0));
                }
            }
            r
        })
        .collect();
    let mut ends: Vec<TrackEnd> = cur.iter().map(|r| TrackEnd { last: if r.is_empty() { None } else { Some(0) }, ..Default::default() }).collect();
    let mut good = Vec::new();
    let mut bad: Vec<u64> = Vec::new();
    for y in 1..=depth {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for (t, r) in cur.iter_mut().enumerate() {
            if ends[t].last != Some(y - 1) {
                continue;
            }
            *r = r.spread(y - 1);
            if !r.words.is_empty() {
                lo = lo.min(r.base);
                hi = hi.max(r.base + r.words.len() as i64 - 1);
            }
        }
        if lo > hi {
            break;
        }
        good.clear();
        good.extend((lo..=hi).map(|w| f0.good_word(y, w)));
        let mut have_bad = false;
        for (t, r) in cur.iter_mut().enumerate() {
            if ends[t].last != Some(y - 1) {
                continue;
            }
            let f = &fields[tracks[t].field];
            let src: &[u64] = if f.is_bad_row(y) {
                if !have_bad {
                    bad.clear();
                    bad.extend((lo..=hi).zip(&good).map(|(w, &g)| f0.bad_word(y, w, g)));
                    have_bad = true;
                }
                &bad
            } else {
                &good
            };
            let off = (r.base - lo) as usize;
            for (k, w) in r.words.iter_mut().enumerate() {
                *w &= src[off + k];
            }
            r.trim();
            if !r.words.is_empty() {
                ends[t].last = Some(y);
            }
        }
    }
    for (t, r) in cur.iter().enumerate() {
        if ends[t].last == Some(depth) {
            ends[t].final_min = r.min_index().map(|i| x_of(i, depth));
            ends[t].final_max = r.max_index().map(|i| x_of(i, depth));
        }
    }
    ends
}

fn origin_sources(f: &OccupancyField) -> Vec<i64> {
    if f.site_open(0, 0).unwrap_or(false) {
        vec![0]
    } else {
        Vec::new()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("p={p} outside [0,1]")));
    }
    Ok(())
}

/// Frequency of an open path from an open origin to row `depth`.
/// Finite depth overestimates θ(p); the depth is part of the estimate.
pub fn estimate_theta(p: f64, depth: u64, reps: u64, seed: u64) -> Result<Estimate> {
    check_p(p)?;
    let hits = par_map(reps, |r| {
        let f = OccupancyField::homogeneous(p, derive_seed(seed, r, TAG_FIELD)).expect("checked p");
        let t = [Track { field: 0, sources: origin_sources(&f) }];
        run_tracks(std::slice::from_ref(&f), &t, depth)[0].survived(depth)
    });
    Ok(wilson(hits.iter().filter(|&&h| h).count() as u64, reps, Z95))
}

/// Mean of r_n / n over the runs from the origin that reach row n.
pub fn estimate_edge_speed(p: f64, n: u64, reps: u64, seed: u64) -> Result<Estimate> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::Config("edge speed needs n >= 1".into()));
    }
    let r = par_map(reps, |r| {
        let f = OccupancyField::homogeneous(p, derive_seed(seed, r, TAG_FIELD)).expect("checked p");
        let t = [Track { field: 0, sources: vec![0] }];
        run_tracks(std::slice::from_ref(&f), &t, n)[0].final_max
    });
    let xs: Vec<f64> = r.into_iter().flatten().map(|x| x as f64 / n as f64).collect();
    Ok(mean_ci(&xs, Z95))
}

/// One CSV row of a survival survey.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurveyRow {
    pub delta: f64,
    pub p_good: f64,
    pub p_bad: f64,
    #[serde(rename = "L")]
    pub l: u64,
    pub depth: u64,
    pub reps: u64,
    pub survivors: u64,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoupledSurvey {
    pub rows: Vec<SurveyRow>,
    /// survived[d][r] for delta index d and replica r.
    pub survived: Vec<Vec<bool>>,
    /// Replica pairs where a larger δ survived and a smaller one did not.
    pub nesting_violations: u64,
}

/// Survival of C_0 to `depth` for each δ. Replica r draws its environment
/// seed and noise seed from (master, r) only, shared by all δ, so bad-line
/// sets are nested in δ and the field is the same up to which rows are bad.
pub fn survival_coupled(deltas: &[f64], l: u64, p_good: f64, p_bad: f64, depth: u64, reps: u64, master: u64) -> Result<CoupledSurvey> {
    check_p(p_good)?;
    check_p(p_bad)?;
    for &d in deltas {
        EnvironmentConfig::new(d, l, depth + 1, 0).check()?;
    }
    let per_rep: Vec<Vec<bool>> = par_map(reps, |r| {
        let env_seed = derive_seed(master, r, TAG_ENV);
        let noise = derive_seed(master, r, TAG_FIELD);
        let fields: Vec<OccupancyField> = deltas
            .iter()
            .map(|&d| {
                let env = sample_environment(&EnvironmentConfig::new(d, l, depth + 1, env_seed)).expect("checked config");
                OccupancyField::new(env, p_good, p_bad, noise).expect("checked p")
            })
            .collect();
        let tracks: Vec<Track> = fields.iter().enumerate().map(|(i, f)| Track { field: i, sources: origin_sources(f) }).collect();
        run_tracks(&fields, &tracks, depth).iter().map(|e| e.survived(depth)).collect()
    });
    let mut survived = vec![vec![false; reps as usize]; deltas.len()];
    for (r, v) in per_rep.iter().enumerate() {
        for (d, &s) in v.iter().enumerate() {
            survived[d][r] = s;
        }
    }
    let mut violations = 0;
    for v in &per_rep {
        for i in 0..deltas.len() {
            for j in 0..deltas.len() {
                if deltas[i] < deltas[j] && v[j] && !v[i] {
                    violations += 1;
                }
            }
        }
    }
    let rows = deltas
        .iter()
        .zip(&survived)
        .map(|(&delta, s)| {
            let k = s.iter().filter(|&&b| b).count() as u64;
            let e = wilson(k, reps, Z95);
            SurveyRow {
                delta,
                p_good,
                p_bad,
                l,
                depth,
                reps,
                survivors: k,
                frequency: if reps == 0 { 0.0 } else { e.value },
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                master_seed: master,
            }
        })
        .collect();
    Ok(CoupledSurvey { rows, survived, nesting_violations: violations })
}

/// Survival survey at one δ. The seed inside `env_cfg` is replaced by
/// per-replica seeds and its window by `depth + 1`.
pub fn survival_experiment(env_cfg: &EnvironmentConfig, p_good: f64, p_bad: f64, depth: u64, reps: u64, master: u64) -> Result<SurveyRow> {
    env_cfg.check()?;
    let s = survival_coupled(&[env_cfg.delta], env_cfg.l, p_good, p_bad, depth, reps, master)?;
    Ok(s.rows.into_iter().next().expect("one row"))
}

#[derive(Clone, Debug, Serialize)]
pub struct TailResult {
    pub p: f64,
    pub depth: u64,
    pub reps: u64,
    /// Interval sizes a = 1..=a_max.
    pub sizes: Vec<u32>,
    /// Runs in which no path from the a-site interval reaches `depth`.
    pub failures: Vec<u64>,
}

impl TailResult {
    pub fn frequency(&self, i: usize) -> f64 {
        self.failures[i] as f64 / self.reps as f64
    }
}

/// Non-survival from intervals {0, 2, ..., 2(a−1)} × {0}, taken as open,
/// with all sizes sharing each replica's field.
pub fn tail_experiment(p: f64, a_max: u32, depth: u64, reps: u64, seed: u64) -> Result<TailResult> {
    check_p(p)?;
    let ends = par_map(reps, |r| {
        let f = OccupancyField::homogeneous(p, derive_seed(seed, r, TAG_FIELD)).expect("checked p");
        let tracks: Vec<Track> = (1..=a_max).map(|a| Track { field: 0, sources: (0..a as i64).map(|j| 2 * j).collect() }).collect();
        run_tracks(std::slice::from_ref(&f), &tracks, depth).iter().map(|e| !e.survived(depth)).collect::<Vec<bool>>()
    });
    let mut failures = vec![0u64; a_max as usize];
    for v in &ends {
        for (i, &b) in v.iter().enumerate() {
            failures[i] += b as u64;
        }
    }
    Ok(TailResult { p, depth, reps, sizes: (1..=a_max).collect(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::sweep::open_cluster;

    #[test]
    fn trivial_probabilities() {
        assert_eq!(estimate_theta(1.0, 200, 5, 1).unwrap().value, 1.0);
        assert_eq!(estimate_theta(0.0, 200, 5, 1).unwrap().value, 0.0);
        assert_eq!(estimate_edge_speed(1.0, 100, 4, 1).unwrap().value, 1.0);
        let r = survival_experiment(&EnvironmentConfig::new(0.0, 12, 1, 0), 1.0, 0.3, 300, 6, 5).unwrap();
        assert_eq!(r.frequency, 1.0);
        let r = survival_experiment(&EnvironmentConfig::new(0.01, 12, 1, 0), 0.0, 0.0, 300, 6, 5).unwrap();
        assert_eq!(r.frequency, 0.0);
    }

    #[test]
    fn tracks_agree_with_open_cluster() {
        for s in 0..10 {
            let f = OccupancyField::homogeneous(0.66, s).unwrap();
            let end = run_tracks(std::slice::from_ref(&f), &[Track { field: 0, sources: vec![0, 4] }], 150)[0];
            let (c, fs) = open_cluster(&f, &[(0, 0), (4, 0)], 150, None);
            assert_eq!(end.last, Some(c.depth_reached));
            if end.survived(150) {
                assert_eq!(end.final_max, fs.r[150]);
                assert_eq!(end.final_min.map(|x| -x), fs.l[150]);
            }
        }
    }

    #[test]
    fn coupled_survivors_are_nested() {
        let s = survival_coupled(&[1e-3, 1e-2, 1e-1], 12, 0.9, 0.05, 2000, 24, 3).unwrap();
        assert_eq!(s.nesting_violations, 0);
        assert!(s.rows[0].survivors >= s.rows[2].survivors);
    }

    #[test]
    fn replicas_do_not_depend_on_other_deltas() {
        let a = survival_coupled(&[1e-2], 12, 0.85, 0.2, 500, 16, 8).unwrap();
        let b = survival_coupled(&[1e-3, 1e-2], 12, 0.85, 0.2, 500, 16, 8).unwrap();
        assert_eq!(a.survived[0], b.survived[1]);
    }

    #[test]
    fn tail_failures_shrink_with_interval() {
        let t = tail_experiment(0.7, 4, 300, 64, 2).unwrap();
        assert!(t.failures.windows(2).all(|w| w[0] >= w[1]));
    }
}
