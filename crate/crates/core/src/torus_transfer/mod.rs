//! Finite-state lattice chains on the torus grid: Ulam discretisation of the
//! noisy map, mixing times, the corrector equation and Kipnis–Varadhan rates.

mod chain;
mod corrector;
mod export;
mod grid;
mod kernel;
mod kv;
mod mixing;

use thiserror::Error;

pub use chain::{LatticeChain, SparseMatrix, Transition};
pub use corrector::{
    corrector_solve, stationary_distribution, CorrectorMode, CorrectorSolution, DEFAULT_SERIES_CAP,
    DEFAULT_SERIES_TOL,
};
pub use export::{read_kernel, write_kernel, write_kernel_text, KERNEL_MAGIC};
pub use grid::UlamGrid;
pub use kernel::{build_displacement_kernel, DisplacementKernel, KernelOptions};
pub use kv::{cov_decay_check, kv_identity, kv_rate, local_variance, variance_path, CovDecay, StateMoments};
pub use mixing::{
    default_mode, distance_profile, mixing_time, MixingMode, DEFAULT_MIXING_CAP, DENSE_LIMIT, MIXING_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("grid kernels are implemented for d = 1, 2 only (got d = {dim})")]
    UnsupportedDimension { dim: usize },
    #[error("noise level must be positive (got {eps})")]
    NonpositiveEpsilon { eps: f64 },
    #[error("grid with {cells} cells per axis is too coarse")]
    GridTooCoarse { cells: usize },
    #[error("distance to uniform stayed above threshold for {cap} steps")]
    NoMixingWithinCap { cap: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("corrector series did not converge within {cap} terms")]
    SeriesDivergence { cap: usize },
    #[error("corrector does not match the chain")]
    MissingCorrector,
    #[error("{states} states exceed the dense limit")]
    TooLarge { states: usize },
    #[error("kernel file: {0}")]
    Format(String),
}
