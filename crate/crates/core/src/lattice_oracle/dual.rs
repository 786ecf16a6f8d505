use nalgebra::DMatrix;

use super::{OracleError, PeriodicChainSpec};
use crate::torus_transfer::{
    corrector_solve, kv_identity, kv_rate, stationary_distribution, CorrectorMode, StateMoments, DENSE_LIMIT,
};

/// Required `sup_g ‖P^n(g, ·) − π‖_{L1}`.
pub const MIXING_GAP: f64 = 1e-12;
/// Step budget for the mixing test and the moment recursion.
pub const DUAL_MAX_STEPS: usize = 10_000;
const MIXING_STEPS: usize = 100_000;
/// Agreement required of the two rates, relative to `max(1, rate_A)`.
pub const DUAL_TOL: f64 = 1e-6;
const STABLE_RUN: usize = 25;

/// The variance rate computed twice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRate {
    /// Corrector solve and `∫ V_v dπ`.
    pub rate_a: f64,
    /// Slope of `var(v·Y_n)` from the moment recursion.
    pub rate_b: f64,
    pub difference: f64,
    /// Moment-recursion steps used.
    pub steps: usize,
    pub corrector_residual: f64,
}

impl DualRate {
    pub fn agrees(&self) -> bool {
        self.difference <= DUAL_TOL * self.rate_a.abs().max(1.0)
    }
}

/// `(n, gap)` with `n` the first power of two (at most `10^5`) where the
/// gap to stationarity drops below [`MIXING_GAP`].
pub fn mixing_gap(spec: &PeriodicChainSpec) -> Result<(usize, f64), OracleError> {
    let s = spec.states();
    if s > DENSE_LIMIT {
        return Err(crate::torus_transfer::TransferError::TooLarge { states: s }.into());
    }
    let p = spec.chain.torus_matrix();
    let pi = stationary_distribution(&p)?;
    let mut m: DMatrix<f64> = p.to_dense();
    let mut n = 1;
    loop {
        let gap = (0..s)
            .map(|g| (0..s).map(|h| (m[(g, h)] - pi[h]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if gap < MIXING_GAP {
            return Ok((n, gap));
        }
        if 2 * n > MIXING_STEPS {
            return Err(OracleError::NotMixing { gap, steps: n });
        }
        m = &m * &m;
        n *= 2;
    }
}

/// Rate of `var(v·Y_n)/n` by the corrector and, independently, by exact
/// moment recursion from the stationary start.
pub fn exact_variance_rate_dual(spec: &PeriodicChainSpec, v: &[f64]) -> Result<DualRate, OracleError> {
    let chain = &spec.chain;
    if v.len() != chain.dim() {
        return Err(OracleError::InvalidSpec(format!("direction has {} components, dim is {}", v.len(), chain.dim())));
    }
    mixing_gap(spec)?;
    let sol = corrector_solve(chain, CorrectorMode::Linear)?;
    let rate_a = kv_rate(chain, &sol, v)?;

    let x = chain.projected_increments(v);
    let shift: f64 = sol.mean_drift.iter().zip(v).map(|(a, b)| a * b).sum();
    let mut m = StateMoments::start(&sol.stationary, |g| chain.position(g).iter().zip(v).map(|(a, b)| a * b).sum());
    let mut prev_var = m.variance_with(|_| 0.0);
    let mut prev_diff = f64::NAN;
    let (mut rate_b, mut steps, mut stable) = (f64::NAN, 0, 0);
    for n in 1..=DUAL_MAX_STEPS {
        m = m.step(chain, &x, shift);
        let var = m.variance_with(|_| 0.0);
        let diff = var - prev_var;
        prev_var = var;
        rate_b = diff;
        steps = n;
        if (diff - prev_diff).abs() <= 1e-13 * diff.abs().max(1.0) {
            stable += 1;
            if stable >= STABLE_RUN {
                break;
            }
        } else {
            stable = 0;
        }
        prev_diff = diff;
    }
    Ok(DualRate { rate_a, rate_b, difference: (rate_a - rate_b).abs(), steps, corrector_residual: sol.residual })
}

/// `max_{n ≤ steps} |var(v·(ζ(Y_n) − ζ(Y_0))) − Σ_{k<n} E V_v(Y_k)|` from `π`.
pub fn kv_identity_defect(spec: &PeriodicChainSpec, v: &[f64], steps: usize) -> Result<f64, OracleError> {
    let sol = corrector_solve(&spec.chain, CorrectorMode::Linear)?;
    let rows = kv_identity(&spec.chain, &sol, v, &sol.stationary, steps)?;
    Ok(rows.iter().fold(0.0, |m, (_, l, r)| m.max((l - r).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_oracle::{build_spec_from_map, random_spec};
    use crate::map_core::examples::doubling;
    use crate::torus_transfer::{cov_decay_check, LatticeChain};

    fn single(rows: Vec<(Vec<i64>, f64)>) -> PeriodicChainSpec {
        let row = rows.into_iter().map(|(j, p)| (0, j, p)).collect();
        PeriodicChainSpec::new(LatticeChain::from_rows(1, vec![0.0], vec![row]), None).unwrap()
    }

    #[test]
    fn coin_rate_is_one() {
        let r = exact_variance_rate_dual(&single(vec![(vec![1], 0.5), (vec![-1], 0.5)]), &[1.0]).unwrap();
        assert!((r.rate_a - 1.0).abs() < 1e-14);
        assert!((r.rate_b - 1.0).abs() < 1e-14);
        assert!(r.agrees());
    }

    #[test]
    fn deterministic_drift_has_zero_rate() {
        let r = exact_variance_rate_dual(&single(vec![(vec![1], 1.0)]), &[1.0]).unwrap();
        assert!(r.rate_a.abs() < 1e-14 && r.rate_b.abs() < 1e-14);
    }

    #[test]
    fn periodic_chain_is_rejected() {
        let rows = vec![vec![(1, vec![0], 1.0)], vec![(0, vec![1], 1.0)]];
        let spec = PeriodicChainSpec::new(LatticeChain::from_rows(1, vec![0.0, 0.5], rows), None).unwrap();
        assert!(matches!(exact_variance_rate_dual(&spec, &[1.0]), Err(OracleError::NotMixing { .. })));
    }

    #[test]
    fn doubling_spec_rates_agree() {
        let spec = build_spec_from_map(&doubling(), 0.1, 128).unwrap();
        let r = exact_variance_rate_dual(&spec, &[1.0]).unwrap();
        assert!(r.difference <= 1e-6, "{r:?}");
        assert!(r.rate_a > 0.05, "{r:?}");
    }

    #[test]
    fn random_specs_satisfy_identities() {
        for seed in 0..20 {
            let spec = random_spec(seed, 5);
            let r = exact_variance_rate_dual(&spec, &[1.0]).unwrap();
            assert!(r.agrees(), "seed {seed}: {r:?}");
            assert!(kv_identity_defect(&spec, &[1.0], 100).unwrap() <= 1e-10);
            let mu = vec![0.2; 5];
            for (m, n) in [(0, 0), (1, 2), (3, 5), (0, 10)] {
                let c = cov_decay_check(&spec.chain, m, n, &[1.0], &mu).unwrap();
                assert!(c.holds(), "seed {seed} m {m} n {n}: {c:?}");
            }
        }
    }
}
