use std::collections::BTreeMap;

use num::{BigRational, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiffusionMatrix, DiffusivityError, LatticeDistribution};
use crate::map_core::{BernoulliMap, PeriodicMap, ThetaMode};
use crate::numerics::split_point;

fn add(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `w^0(m, ·)`: weight `|E_i|` at `m + σ_0(i)`.
pub fn one_step_cube_distribution(map: &BernoulliMap, m: &[i64]) -> LatticeDistribution {
    let d = map.dim();
    if map.has_exact_volumes() {
        let mut atoms: BTreeMap<Vec<i64>, BigRational> = BTreeMap::new();
        for c in map.cells() {
            *atoms.entry(add(m, &c.target)).or_insert_with(BigRational::zero) += c.exact_volume().unwrap();
        }
        if let Ok(w) = LatticeDistribution::from_exact(d, atoms) {
            return w;
        }
    }
    let mut atoms = BTreeMap::new();
    for c in map.cells() {
        *atoms.entry(add(m, &c.target)).or_insert(0.0) += c.volume;
    }
    // volumes of a valid map sum to 1 up to rounding; renormalise
    let total: f64 = atoms.values().sum();
    atoms.values_mut().for_each(|p| *p /= total);
    LatticeDistribution::new(d, atoms).expect("cell volumes sum to one")
}

/// `D_{w^0} = Σ |E_i| σ_0(i)σ_0(i)ᵀ − m mᵀ`.
pub fn d_w0(map: &BernoulliMap) -> DiffusionMatrix {
    one_step_cube_distribution(map, &vec![0; map.dim()]).covariance()
}

/// Law of `⌊X^0_{1+θ^ε}(U)⌋`, `U ~ unif(Q_{⌊z⌋})`.
///
/// Exact mode enumerates the cylinders of `S_ε` over `Q_0`: on
/// `φ^{-1}(C_{σ_0(i), t}) ∩ E_i` the expansion time is `|t|` and the orbit
/// lands in `Q_{J(σ_0(i), t)}`. The result is `w^0 * L` with `L` the law of
/// `J(0, t)` under the cylinder volumes.
pub fn w_check_distribution(
    map: &BernoulliMap,
    z: &[f64],
    eps: f64,
    mode: ThetaMode,
) -> Result<LatticeDistribution, DiffusivityError> {
    let d = map.dim();
    let mut base = vec![0i64; d];
    let mut frac = vec![0.0; d];
    split_point(z, &mut base, &mut frac);
    if eps >= 1.0 {
        return Ok(one_step_cube_distribution(map, &base));
    }
    let origin = vec![0i64; d];
    let dist = match mode {
        ThetaMode::Exact { budget } => {
            let exact = map.has_exact_volumes();
            let mut float: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
            let mut rational: BTreeMap<Vec<i64>, BigRational> = BTreeMap::new();
            map.visit_s_eps(eps, budget, |leaf| {
                let j = map.cylinder_landing(&origin, leaf.symbols);
                if exact {
                    let v = map.exact_tuple_volume(leaf.symbols).expect("exact volumes");
                    *rational.entry(j).or_insert_with(BigRational::zero) += v;
                } else {
                    *float.entry(j).or_insert(0.0) += leaf.volume;
                }
            })?;
            let landing = if exact {
                LatticeDistribution::from_exact(d, rational)?
            } else {
                let total: f64 = float.values().sum();
                float.values_mut().for_each(|p| *p /= total);
                LatticeDistribution::new(d, float)?
            };
            one_step_cube_distribution(map, &origin).convolve(&landing)
        }
        ThetaMode::MonteCarlo { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
            let mut u = vec![0.0; d];
            let mut cube = vec![0i64; d];
            for _ in 0..samples {
                for x in u.iter_mut() {
                    *x = rng.gen::<f64>();
                }
                let theta = map.theta_eps(&u, eps)?;
                let mut x = u.clone();
                for _ in 0..=theta {
                    x = map.apply(&x);
                }
                split_point(&x, &mut cube, &mut frac);
                *counts.entry(cube.clone()).or_insert(0) += 1;
            }
            let n = samples.max(1) as f64;
            LatticeDistribution::new(d, counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())?
        }
    };
    Ok(dist.shifted(&base))
}

/// `D_{w̌^ε}` both from the identity `(1 + θ̄^ε) D_{w^0}` and from the
/// covariance of the exact `w̌^ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DwCheck {
    pub theta_bar: f64,
    pub theta_bar_exact: Option<BigRational>,
    pub identity: DiffusionMatrix,
    pub covariance: DiffusionMatrix,
    /// `(1 + θ̄) · mean(w^0)`.
    pub wald_mean: Vec<f64>,
    /// Mean of `w̌^ε(0, ·)`.
    pub mean: Vec<f64>,
    /// `E (S − τ m)(S − τ m)ᵀ` for the landing cube `S` after `τ = 1 + θ^ε`
    /// steps, `m` the mean of `w^0`.
    pub wald_second: DiffusionMatrix,
}

impl DwCheck {
    /// Largest entrywise gap between the identity and the covariance.
    pub fn defect(&self) -> f64 {
        self.identity.max_abs_diff(&self.covariance)
    }

    /// Largest entrywise gap between the identity and the centred second
    /// moment.
    pub fn wald_second_defect(&self) -> f64 {
        self.identity.max_abs_diff(&self.wald_second)
    }

    pub fn wald_defect(&self) -> f64 {
        self.wald_mean.iter().zip(&self.mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `(1 + θ̄^ε) · D_{w^0}`, cross-checked against the covariance of `w̌^ε`.
pub fn d_w_check(map: &BernoulliMap, eps: f64, budget: usize) -> Result<DwCheck, DiffusivityError> {
    let d = map.dim();
    let theta = map.theta_bar(eps, ThetaMode::Exact { budget })?;
    let factor_exact = theta.exact.as_ref().map(|t| t + BigRational::one());
    let w0 = one_step_cube_distribution(map, &vec![0; d]);
    let identity = w0.covariance().scaled(1.0 + theta.value, factor_exact.as_ref());
    let w = w_check_distribution(map, &vec![0.0; d], eps, ThetaMode::Exact { budget })?;
    let wald_mean = w0.mean().iter().map(|m| m * (1.0 + theta.value)).collect();
    let wald_second = centred_second_moment(map, eps, budget)?;
    Ok(DwCheck {
        theta_bar: theta.value,
        theta_bar_exact: theta.exact,
        identity,
        covariance: w.covariance(),
        wald_mean,
        mean: w.mean(),
        wald_second,
    })
}

fn centred_second_moment(map: &BernoulliMap, eps: f64, budget: usize) -> Result<DiffusionMatrix, DiffusivityError> {
    let d = map.dim();
    let exact = map.has_exact_volumes();
    let int = |x: i64| BigRational::from_integer(x.into());
    let mut m = vec![0.0; d];
    let mut m_exact = vec![BigRational::zero(); d];
    for c in map.cells() {
        for i in 0..d {
            m[i] += c.volume * c.target[i] as f64;
            if exact {
                m_exact[i] += c.exact_volume().unwrap() * int(c.target[i]);
            }
        }
    }
    let mut acc = vec![0.0; d * d];
    let mut acc_exact = vec![BigRational::zero(); d * d];
    let origin = vec![0i64; d];
    map.visit_s_eps(eps.min(1.0), budget, |leaf| {
        let tau = 1 + leaf.symbols.len() as i64;
        let j = map.cylinder_landing(&origin, leaf.symbols);
        let leaf_exact = if exact { map.exact_tuple_volume(leaf.symbols) } else { None };
        for c in map.cells() {
            let s: Vec<i64> = add(&j, &c.target);
            let w = c.volume * leaf.volume;
            let dev: Vec<f64> = (0..d).map(|i| s[i] as f64 - tau as f64 * m[i]).collect();
            for a in 0..d {
                for b in 0..d {
                    acc[a * d + b] += w * dev[a] * dev[b];
                }
            }
            if let Some(lv) = &leaf_exact {
                let we = c.exact_volume().unwrap() * lv;
                let dev: Vec<BigRational> = (0..d).map(|i| int(s[i]) - int(tau) * &m_exact[i]).collect();
                for a in 0..d {
                    for b in 0..d {
                        acc_exact[a * d + b] += &we * &dev[a] * &dev[b];
                    }
                }
            }
        }
    })?;
    if exact {
        let entries = acc_exact.iter().map(crate::map_core::ratio_to_f64).collect();
        Ok(DiffusionMatrix { dim: d, entries, exact: Some(acc_exact) })
    } else {
        Ok(DiffusionMatrix { dim: d, entries: acc, exact: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::*;
    use crate::map_core::DEFAULT_NODE_BUDGET;

    fn q(p: i64, r: i64) -> BigRational {
        BigRational::new(p.into(), r.into())
    }

    const EXACT: ThetaMode = ThetaMode::Exact { budget: DEFAULT_NODE_BUDGET };

    #[test]
    fn one_step_examples() {
        let w = one_step_cube_distribution(&doubling(), &[0]);
        assert_eq!(w.exact_prob(&[0]), Some(q(1, 2)));
        assert_eq!(w.exact_prob(&[1]), Some(q(1, 2)));
        let a = one_step_cube_distribution(&asymmetric(), &[0]);
        assert_eq!(a.exact_prob(&[0]), Some(q(1, 3)));
        assert_eq!(a.exact_prob(&[1]), Some(q(2, 3)));
        assert_eq!(one_step_cube_distribution(&asymmetric(), &[-4]), a.shifted(&[-4]));
    }

    #[test]
    fn d_w0_examples() {
        assert_eq!(d_w0(&doubling()).exact_entry(0, 0), Some(&q(1, 4)));
        assert_eq!(d_w0(&asymmetric()).exact_entry(0, 0), Some(&q(2, 9)));
        assert_eq!(d_w0(&no_drift_doubling()).exact_entry(0, 0), Some(&q(0, 1)));
        let quad = d_w0(&quadrant());
        assert_eq!(quad.exact, Some(vec![q(1, 4), q(0, 1), q(0, 1), q(1, 4)]));
    }

    #[test]
    fn w_check_doubling_is_binomial() {
        let w = w_check_distribution(&doubling(), &[0.3], 0.1, EXACT).unwrap();
        let binom = [1, 5, 10, 10, 5, 1];
        for (k, c) in binom.iter().enumerate() {
            assert_eq!(w.exact_prob(&[k as i64]), Some(q(*c, 32)));
        }
        assert_eq!(w.support_len(), 6);
        let moved = w_check_distribution(&doubling(), &[-2.7], 0.1, EXACT).unwrap();
        assert_eq!(moved, w.shifted(&[-3]));
    }

    #[test]
    fn d_w_check_doubling() {
        let r = d_w_check(&doubling(), 0.1, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(r.identity.exact_entry(0, 0), Some(&q(5, 4)));
        assert_eq!(r.covariance.exact, r.identity.exact);
        assert!(r.wald_defect() < 1e-12);
    }

    #[test]
    fn wald_identities_on_asymmetric() {
        for eps in [0.3, 0.1, 0.02] {
            let r = d_w_check(&asymmetric(), eps, DEFAULT_NODE_BUDGET).unwrap();
            assert!(r.wald_defect() < 1e-10, "eps={eps}: {:?} vs {:?}", r.mean, r.wald_mean);
            let expected = q(2, 9) * (r.theta_bar_exact.clone().unwrap() + BigRational::one());
            assert_eq!(r.identity.exact_entry(0, 0), Some(&expected));
            assert_eq!(r.wald_second.exact, r.identity.exact);
            // θ^ε is not constant here and correlates with the increments
            assert!(r.covariance.get(0, 0) > r.identity.get(0, 0) + 0.5);
        }
    }

    #[test]
    fn quadrant_wald_second_moment() {
        let r = d_w_check(&quadrant(), 0.1, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(r.wald_second.exact, r.identity.exact);
        assert!(r.defect() < 1e-12);
    }

    #[test]
    fn no_drift_map_has_zero_w_check_covariance() {
        let r = d_w_check(&no_drift_doubling(), 0.05, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(r.identity.entries, vec![0.0]);
        assert_eq!(r.covariance.entries, vec![0.0]);
    }

    #[test]
    fn monte_carlo_w_check_matches_exact() {
        let exact = w_check_distribution(&asymmetric(), &[0.0], 0.1, EXACT).unwrap();
        let mc = w_check_distribution(&asymmetric(), &[0.0], 0.1, ThetaMode::MonteCarlo { samples: 40_000, seed: 5 })
            .unwrap();
        for (k, p) in exact.atoms() {
            let se = (p * (1.0 - p) / 40_000.0).sqrt();
            assert!((mc.prob(k) - p).abs() < 5.0 * se + 1e-12, "{k:?}");
        }
    }
}
