//! Oriented site percolation in a layered environment.

pub mod crossing;
mod edges;
pub mod field;
pub mod passability;
pub mod survival;
pub mod sweep;

pub use crossing::{crossing_experiment, CrossingResult};
pub use field::OccupancyField;
pub use passability::{
    build_hierarchical_set, c_passable, chained_monolithic, dense_kernel, hset_requirement, rooted_seed_below, s_passable,
    verify_seed, ChainOutcome, Member, PassCtx, PassOutcome, Seed,
};
pub use survival::{
    estimate_edge_speed, estimate_theta, survival_coupled, survival_experiment, tail_experiment, CoupledSurvey, SurveyRow,
    TailResult,
};
pub use sweep::{nu_n, open_cluster, FrontierStats, LocalReach, OpenCluster, Orientation};

use rayon::prelude::*;

/// Worker count from PERC_THREADS, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("PERC_THREADS").ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)
}

/// Maps `f` over 0..n in parallel and returns results in index order,
/// so output never depends on scheduling.
pub fn par_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match thread_cap() {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        },
        None => (0..n).into_par_iter().map(f).collect(),
    }
}
