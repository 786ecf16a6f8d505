//! Exact finite-state checks for `Z^d`-periodic chains: two independent
//! evaluations of the variance rate and the minorized lower bound.

mod bound;
mod dual;
mod spec;

use thiserror::Error;

pub use bound::{minorization_bound_check, BoundCheck, Stopping, BOUND_SLACK};
pub use dual::{exact_variance_rate_dual, kv_identity_defect, mixing_gap, DualRate, DUAL_MAX_STEPS, DUAL_TOL, MIXING_GAP};
pub use spec::{build_spec_from_map, random_spec, Minorizer, PeriodicChainSpec, ROW_SUM_TOL};

use crate::map_core::MapError;
use crate::torus_transfer::TransferError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),
    #[error("minorizer is not dominated by the kernel: {0}")]
    InvalidMinorizer(String),
    #[error("invalid stopping schedule: {0}")]
    InvalidStoppingSchedule(String),
    #[error("chain not within {gap:e} of stationarity after {steps} steps")]
    NotMixing { gap: f64, steps: usize },
    #[error("singular corrector system")]
    SingularSystem,
    #[error("spec file: {0}")]
    Parse(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Transfer(TransferError),
}

impl From<TransferError> for OracleError {
    fn from(e: TransferError) -> Self {
        match e {
            TransferError::SingularSystem => OracleError::SingularSystem,
            e => OracleError::Transfer(e),
        }
    }
}
