//! Numerical kernel: seeded random streams, truncated Student-t noise,
//! Nelder-Mead, BCa bootstrap, rank and hypergeometric tests, power-law tail
//! fitting and symmetric eigendecomposition.

mod bootstrap;
mod eigen;
mod hypergeom;
mod powerlaw;
mod ranktest;
pub mod rng;
mod simplex;
pub mod stats;
mod student;

use thiserror::Error;

pub use bootstrap::{bca_from_replicates, bca_interval, bca_intervals, percentile_interval, quantile_sorted, BcaInterval};
pub use eigen::{symmetric_eigen, top_eigenvectors, EigenPair, SymMatrix};
pub use hypergeom::hypergeom_tail;
pub use powerlaw::{fit_power_tail, fit_power_tail_with, TailFit};
pub use ranktest::mann_whitney_p;
pub use rng::RngStream;
pub use simplex::{nelder_mead, SimplexOptions, SimplexResult};
pub use student::{draw_student_t_unit, truncated_t_expectation, unit_t_density};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no draw within |x| <= {cutoff} after {attempts} attempts")]
    ResamplingExhausted { attempts: usize, cutoff: f64 },
    #[error("fit failed: {0}")]
    FitFailed(String),
}
