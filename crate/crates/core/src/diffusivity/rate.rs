use super::DiffusivityError;
use crate::map_core::PeriodicMap;
use crate::process::{simulate_ensemble, EnsembleSpec};

/// `(var(v·X_n) − var(v·X_{n/2})) / (n/2)` with a batch standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub std_error: f64,
    pub steps: usize,
    pub var_half: f64,
    pub var_full: f64,
}

impl RateEstimate {
    /// `|rate − target| / SE`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.rate - target).abs() / self.std_error
    }
}

/// Differenced variance rate from uniform starts on `Q_0`.
pub fn variance_rate_mc<M: PeriodicMap + ?Sized>(
    map: &M,
    eps: f64,
    v: &[f64],
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<RateEstimate, DiffusivityError> {
    variance_rate_with(map, EnsembleSpec::new(eps, steps, trajectories, seed), v)
}

/// As [`variance_rate_mc`] with an arbitrary ensemble; checkpoints are
/// overwritten with `{n/2, n}`.
pub fn variance_rate_with<M: PeriodicMap + ?Sized>(
    map: &M,
    mut spec: EnsembleSpec,
    v: &[f64],
) -> Result<RateEstimate, DiffusivityError> {
    let n = spec.steps;
    if n < 2 {
        return Err(DiffusivityError::HorizonTooShort { steps: n });
    }
    let half = n / 2;
    let span = (n - half) as f64;
    spec.checkpoints = vec![half, n];
    spec.directions = vec![v.to_vec()];
    let report = simulate_ensemble(map, &spec);
    let var_half = report.snapshots[0].directional[0].variance;
    let var_full = report.snapshots[1].directional[0].variance;
    let per_batch: Vec<f64> = report
        .batches
        .iter()
        .map(|b| (b[1].directional_variance(v) - b[0].directional_variance(v)) / span)
        .collect();
    Ok(RateEstimate {
        rate: (var_full - var_half) / span,
        std_error: crate::process::batch_std_error(&per_batch),
        steps: n,
        var_half,
        var_full,
    })
}
