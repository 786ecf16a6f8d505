//! Grid verification (d = 1) of the bump-function minorization chain and
//! the Doeblin lemmas.

mod bump;
mod chain;
mod density;
mod doeblin;

use thiserror::Error;

pub use bump::{c_norm, f_star, BumpFamily};
pub use chain::{beta_theory, verify_bump_chain, BumpChainReport, BumpStep};
pub use density::{
    convolve_gaussian, defragment, gauss_legendre, push_density, push_forward, GridDensity, DEFAULT_TAIL_TOL,
    WINDOW_CELL_BUDGET,
};
pub use doeblin::{
    verify_doeblin, z_one_step_density, z_two_step_density, DoeblinReport, DoeblinStage, DOEBLIN_MAX_EPS,
};

use crate::diffusivity::DiffusivityError;
use crate::map_core::MapError;

/// Default cells per unit length.
pub const DEFAULT_GRID: usize = 2048;
/// Cells excluded at each end of a cylinder when forming ratios.
pub const BOUNDARY_LAYER: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinorError {
    #[error("grid checks are implemented for d = 1 only (got d = {dim})")]
    UnsupportedDimension { dim: usize },
    #[error("cylinder side {ell} is below the noise level {eps}")]
    HypothesisViolated { ell: f64, eps: f64 },
    #[error("density window of {cells} cells exceeds the budget")]
    WindowBudgetExceeded { cells: usize },
    #[error("noise level {eps} out of range")]
    EpsilonOutOfRange { eps: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Diffusivity(#[from] DiffusivityError),
}
