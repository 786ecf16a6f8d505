//! Effective-diffusivity estimates and the exact lower-bound quantities
//! `w^0`, `D_{w^0}`, `w̌^ε` and `D_{w̌^ε}`.

mod distribution;
mod rate;
mod sweep;
mod theory;

use thiserror::Error;

pub use distribution::{DiffusionMatrix, LatticeDistribution, MASS_TOL};
pub use rate::{variance_rate_mc, variance_rate_with, RateEstimate};
pub use sweep::{residual_sweep, SweepConfig, SweepReport, SweepRow, SWEEP_CSV_HEADER};
pub use theory::{d_w0, d_w_check, one_step_cube_distribution, w_check_distribution, DwCheck};

use crate::map_core::MapError;
use crate::torus_transfer::TransferError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusivityError {
    #[error("probabilities sum to {total}")]
    InvalidDistribution { total: f64 },
    #[error("horizon {steps} is too short")]
    HorizonTooShort { steps: usize },
    #[error("noise levels must be strictly decreasing and in (0, 1)")]
    BadEpsilonList,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}
