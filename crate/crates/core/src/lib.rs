//! Multi-scale renormalization of oriented site percolation on the
//! half-lattice {(x, y): y ≥ 0, x + y even} in a random environment of
//! horizontal bad lines.

pub mod bounds;
pub mod cli;
pub mod clusters;
pub mod environment;
pub mod error;
pub mod layers;
pub mod percolation;
pub mod report;
pub mod rng;
pub mod sites;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
