use super::{exact_variance_rate_dual, OracleError, PeriodicChainSpec};
use crate::torus_transfer::stationary_distribution;

pub const BOUND_SLACK: f64 = 1e-9;
const MAX_STOP: usize = 64;

/// Observation times `τ_n` of the chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Stopping {
    /// `τ_n = n`.
    None,
    /// `τ_n = k n`.
    Every(usize),
    /// Each stopped step runs `h(g)` steps of the chain from state `g`.
    PerState(Vec<usize>),
}

impl Stopping {
    fn schedule(&self, states: usize) -> Result<Option<Vec<usize>>, OracleError> {
        let h = match self {
            Stopping::None => return Ok(None),
            Stopping::Every(k) => vec![*k; states],
            Stopping::PerState(h) => h.clone(),
        };
        if h.len() != states {
            return Err(OracleError::InvalidStoppingSchedule(format!("{} entries for {states} states", h.len())));
        }
        if let Some(bad) = h.iter().find(|k| **k == 0 || **k > MAX_STOP) {
            return Err(OracleError::InvalidStoppingSchedule(format!("step count {bad} outside 1..={MAX_STOP}")));
        }
        Ok(Some(h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// Variance rate per observation.
    pub rate: f64,
    /// `γ β v·D̄_w·v`.
    pub bound: f64,
    pub beta: f64,
    /// `π`-average of `Var_{w(g)}(v·j)`.
    pub dw_bar: f64,
    /// Guaranteed steps per observation, `min h`.
    pub gamma: f64,
    pub pass: bool,
}

/// Compares the variance rate with the minorized lower bound, optionally
/// along a stopping schedule.
pub fn minorization_bound_check(spec: &PeriodicChainSpec, v: &[f64], stopping: &Stopping) -> Result<BoundCheck, OracleError> {
    let m = spec
        .minorizer
        .as_ref()
        .ok_or_else(|| OracleError::InvalidMinorizer("spec declares no minorizer".into()))?;
    let schedule = stopping.schedule(spec.states())?;
    let pi = stationary_distribution(&spec.chain.torus_matrix())?;
    let dw_bar: f64 = (0..spec.states()).map(|g| pi[g] * m.variance(g, v)).sum();
    let (rate, gamma) = match schedule {
        None => (exact_variance_rate_dual(spec, v)?.rate_a, 1.0),
        Some(h) => {
            let stopped = PeriodicChainSpec { chain: spec.chain.stopped(&h), minorizer: None, omitted_mass: spec.omitted_mass };
            let gamma = *h.iter().min().unwrap() as f64;
            (exact_variance_rate_dual(&stopped, v)?.rate_a, gamma)
        }
    };
    let bound = gamma * m.beta * dw_bar;
    Ok(BoundCheck { rate, bound, beta: m.beta, dw_bar, gamma, pass: rate >= bound - BOUND_SLACK })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::lattice_oracle::{random_spec, Minorizer};
    use crate::torus_transfer::LatticeChain;

    fn coin() -> PeriodicChainSpec {
        let row = vec![(0, vec![1], 0.5), (0, vec![-1], 0.5)];
        let w: BTreeMap<Vec<i64>, f64> = [(vec![1], 0.5), (vec![-1], 0.5)].into_iter().collect();
        PeriodicChainSpec::new(LatticeChain::from_rows(1, vec![0.0], vec![row]), Some(Minorizer::constant(1.0, w, 1))).unwrap()
    }

    #[test]
    fn equality_case() {
        let c = minorization_bound_check(&coin(), &[1.0], &Stopping::None).unwrap();
        assert!((c.rate - 1.0).abs() < 1e-14 && (c.bound - 1.0).abs() < 1e-14);
        assert!(c.pass);
    }

    #[test]
    fn doubled_schedule() {
        let c = minorization_bound_check(&coin(), &[1.0], &Stopping::Every(2)).unwrap();
        assert!((c.rate - 2.0).abs() < 1e-13, "{c:?}");
        assert!((c.bound - 2.0).abs() < 1e-14);
        assert!(c.pass);
        let p = minorization_bound_check(&coin(), &[1.0], &Stopping::PerState(vec![3])).unwrap();
        assert!((p.rate - 3.0).abs() < 1e-12 && p.pass);
    }

    #[test]
    fn bad_schedules() {
        for s in [Stopping::Every(0), Stopping::PerState(vec![1, 2]), Stopping::Every(1000)] {
            assert!(matches!(
                minorization_bound_check(&coin(), &[1.0], &s),
                Err(OracleError::InvalidStoppingSchedule(_))
            ));
        }
    }

    #[test]
    fn missing_minorizer() {
        let s = random_spec(0, 5);
        assert!(matches!(minorization_bound_check(&s, &[1.0], &Stopping::None), Err(OracleError::InvalidMinorizer(_))));
    }

    #[test]
    fn intrinsic_minorizers_give_valid_bounds() {
        for seed in 0..10 {
            let mut s = random_spec(seed, 5);
            s.minorizer = Minorizer::intrinsic(&s.chain);
            if s.minorizer.is_some() {
                let c = minorization_bound_check(&s, &[1.0], &Stopping::None).unwrap();
                assert!(c.pass, "seed {seed}: {c:?}");
            }
        }
    }
}
