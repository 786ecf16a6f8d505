//! Variance rates of `v·Y_n` on a lattice chain: the corrector formula and
//! exact moment recursions.

use super::mixing::{default_mode, distance_profile};
use super::{CorrectorSolution, LatticeChain, TransferError};
use crate::numerics::dot;

fn check(chain: &LatticeChain, corrector: &CorrectorSolution) -> Result<(), TransferError> {
    if corrector.states != chain.states() || corrector.dim != chain.dim() {
        return Err(TransferError::MissingCorrector);
    }
    Ok(())
}

/// `V_v(g) = E^g (v·(ζ(Y_1) − ζ(Y_0) − s̄))²` with `ζ = id + χ`.
pub fn local_variance(chain: &LatticeChain, corrector: &CorrectorSolution, v: &[f64]) -> Result<Vec<f64>, TransferError> {
    check(chain, corrector)?;
    let d = chain.dim();
    let vs = dot(v, &corrector.mean_drift);
    let mut inc = vec![0.0; d];
    Ok((0..chain.states())
        .map(|g| {
            let chi_g = dot(v, corrector.chi_at(g));
            chain
                .row(g)
                .map(|t| {
                    chain.increment(g, &t, &mut inc);
                    let x = dot(v, &inc) + dot(v, corrector.chi_at(t.to)) - chi_g - vs;
                    t.prob * x * x
                })
                .sum()
        })
        .collect())
}

/// `∫ V_v dπ`, the Kipnis–Varadhan variance rate.
pub fn kv_rate(chain: &LatticeChain, corrector: &CorrectorSolution, v: &[f64]) -> Result<f64, TransferError> {
    let local = local_variance(chain, corrector, v)?;
    Ok(local.iter().zip(&corrector.stationary).map(|(a, p)| a * p).sum())
}

/// Per-state partial moments `(P(g_n = g), E[S; g_n = g], E[S²; g_n = g])`
/// of an additive functional `S_n = S_0 + Σ_{k<n} f(g_k, g_{k+1}, j_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMoments {
    pub mass: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl StateMoments {
    /// `S_0 = s0(g_0)` with `g_0 ~ μ`.
    pub fn start(mu: &[f64], s0: impl Fn(usize) -> f64) -> Self {
        StateMoments {
            mass: mu.to_vec(),
            first: mu.iter().enumerate().map(|(g, m)| m * s0(g)).collect(),
            second: mu.iter().enumerate().map(|(g, m)| m * s0(g) * s0(g)).collect(),
        }
    }

    /// One step; `x` holds transition increments in row order
    /// (see [`LatticeChain::projected_increments`]), each shifted by `−shift`.
    pub fn step(&self, chain: &LatticeChain, x: &[f64], shift: f64) -> StateMoments {
        let n = chain.states();
        let mut out = StateMoments { mass: vec![0.0; n], first: vec![0.0; n], second: vec![0.0; n] };
        let mut e = 0;
        for g in 0..n {
            let (m, a, b) = (self.mass[g], self.first[g], self.second[g]);
            let skip = m == 0.0 && a == 0.0 && b == 0.0;
            for t in chain.row(g) {
                if !skip {
                    let xi = x[e] - shift;
                    out.mass[t.to] += t.prob * m;
                    out.first[t.to] += t.prob * (a + m * xi);
                    out.second[t.to] += t.prob * (b + 2.0 * a * xi + m * xi * xi);
                }
                e += 1;
            }
        }
        out
    }

    /// `var(S_n + h(g_n))`.
    pub fn variance_with(&self, h: impl Fn(usize) -> f64) -> f64 {
        let (mut e1, mut e2) = (0.0, 0.0);
        for g in 0..self.mass.len() {
            let hg = h(g);
            e1 += self.first[g] + self.mass[g] * hg;
            e2 += self.second[g] + 2.0 * self.first[g] * hg + self.mass[g] * hg * hg;
        }
        e2 - e1 * e1
    }
}

/// `var(v·Y_k)` for `k = 0, …, n`, `Y_0 = c(g_0)`, `g_0 ~ μ`.
pub fn variance_path(chain: &LatticeChain, v: &[f64], mu: &[f64], n: usize) -> Vec<f64> {
    let d = chain.dim();
    // constant shift for conditioning only
    let shift = {
        let s = chain.drift();
        let total: f64 = mu.iter().sum();
        (0..chain.states()).map(|g| mu[g] * dot(v, &s[g * d..(g + 1) * d])).sum::<f64>() / total
    };
    let x = chain.projected_increments(v);
    let mut m = StateMoments::start(mu, |g| dot(v, chain.position(g)));
    let mut out = vec![m.variance_with(|_| 0.0)];
    for _ in 0..n {
        m = m.step(chain, &x, shift);
        out.push(m.variance_with(|_| 0.0));
    }
    out
}

/// Rows `(n, var(v·(ζ(Y_n) − ζ(Y_0))), Σ_{k<n} E V_v(Y_k))` for `n = 0..=steps`.
pub fn kv_identity(
    chain: &LatticeChain,
    corrector: &CorrectorSolution,
    v: &[f64],
    mu: &[f64],
    steps: usize,
) -> Result<Vec<(usize, f64, f64)>, TransferError> {
    let local = local_variance(chain, corrector, v)?;
    let x = chain.projected_increments(v);
    let vs = dot(v, &corrector.mean_drift);
    let vchi: Vec<f64> = (0..chain.states()).map(|g| dot(v, corrector.chi_at(g))).collect();
    let mut m = StateMoments::start(mu, |g| -vchi[g]);
    let mut rows = vec![(0, m.variance_with(|g| vchi[g]), 0.0)];
    let mut acc = 0.0;
    for n in 1..=steps {
        acc += m.mass.iter().zip(&local).map(|(p, l)| p * l).sum::<f64>();
        m = m.step(chain, &x, vs);
        rows.push((n, m.variance_with(|g| vchi[g]), acc));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovDecay {
    pub lhs: f64,
    pub rhs: f64,
    /// `sup_g ‖P^n(g, ·) − uniform‖_{L1}`.
    pub distance: f64,
    /// `sup_g E^g |Δ_0|²`.
    pub increment_moment: f64,
}

impl CovDecay {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// `|cov(v·Δ_m, v·Δ_{m+n+1})|` from `g_0 ~ μ`, against
/// `4|v|² sup_g ‖P^n(g,·) − 1‖_{L1} sup_g E^g|Δ_0|²`.
pub fn cov_decay_check(chain: &LatticeChain, m: usize, n: usize, v: &[f64], mu: &[f64]) -> Result<CovDecay, TransferError> {
    let states = chain.states();
    let d = chain.dim();
    let p = chain.torus_matrix();
    let drift = chain.drift();
    let a: Vec<f64> = (0..states).map(|g| dot(v, &drift[g * d..(g + 1) * d])).collect();
    // h = P^n a
    let mut h = a.clone();
    let mut tmp = vec![0.0; states];
    for _ in 0..n {
        p.apply(&h, &mut tmp);
        std::mem::swap(&mut h, &mut tmp);
    }
    let mut mu_m = mu.to_vec();
    for _ in 0..m {
        p.left_apply(&mu_m, &mut tmp);
        std::mem::swap(&mut mu_m, &mut tmp);
    }
    let mut mu_late = mu_m.clone();
    for _ in 0..n + 1 {
        p.left_apply(&mu_late, &mut tmp);
        std::mem::swap(&mut mu_late, &mut tmp);
    }
    let mut inc = vec![0.0; d];
    let mut joint = 0.0;
    for g in 0..states {
        if mu_m[g] == 0.0 {
            continue;
        }
        for t in chain.row(g) {
            chain.increment(g, &t, &mut inc);
            joint += mu_m[g] * t.prob * dot(v, &inc) * h[t.to];
        }
    }
    let e_early: f64 = mu_m.iter().zip(&a).map(|(x, y)| x * y).sum();
    let e_late: f64 = mu_late.iter().zip(&a).map(|(x, y)| x * y).sum();
    let lhs = (joint - e_early * e_late).abs();
    let distance = *distance_profile(&p, n, default_mode(states))?.last().unwrap();
    let increment_moment = chain.increment_second_moment().into_iter().fold(0.0, f64::max);
    let rhs = 4.0 * dot(v, v) * distance * increment_moment;
    Ok(CovDecay { lhs, rhs, distance, increment_moment })
}

#[cfg(test)]
mod tests {
    use super::super::{build_displacement_kernel, corrector_solve, CorrectorMode, KernelOptions, UlamGrid};
    use super::*;
    use crate::map_core::examples::doubling;

    fn coin() -> LatticeChain {
        LatticeChain::from_rows(1, vec![0.5], vec![vec![(0, vec![-1], 0.5), (0, vec![1], 0.5)]])
    }

    #[test]
    fn iid_increments() {
        let c = coin();
        let sol = corrector_solve(&c, CorrectorMode::Linear).unwrap();
        assert!((kv_rate(&c, &sol, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        let path = variance_path(&c, &[1.0], &[1.0], 10);
        assert!((path[10] - 10.0).abs() < 1e-12);
        let cd = cov_decay_check(&c, 0, 3, &[1.0], &[1.0]).unwrap();
        assert_eq!(cd.lhs, 0.0);
        assert!(cd.holds());
    }

    #[test]
    fn deterministic_drift_has_no_variance() {
        let c = LatticeChain::from_rows(1, vec![0.5], vec![vec![(0, vec![1], 1.0)]]);
        let sol = corrector_solve(&c, CorrectorMode::Linear).unwrap();
        assert_eq!(kv_rate(&c, &sol, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn finite_n_identity_on_doubling() {
        let k = build_displacement_kernel(&doubling(), 0.1, UlamGrid::new(1, 64), KernelOptions::default()).unwrap();
        let sol = corrector_solve(&k.chain, CorrectorMode::Linear).unwrap();
        let mut mu = vec![0.0; 64];
        mu[13] = 1.0;
        for (n, lhs, rhs) in kv_identity(&k.chain, &sol, &[1.0], &mu, 60).unwrap() {
            assert!((lhs - rhs).abs() < 1e-10, "n={n}: {lhs} vs {rhs}");
        }
        let cd = cov_decay_check(&k.chain, 0, 5, &[1.0], &mu).unwrap();
        assert!(cd.holds(), "{cd:?}");
    }

    #[test]
    fn kv_rate_matches_variance_slope() {
        let k = build_displacement_kernel(&doubling(), 0.1, UlamGrid::new(1, 64), KernelOptions::default()).unwrap();
        let sol = corrector_solve(&k.chain, CorrectorMode::Linear).unwrap();
        let rate = kv_rate(&k.chain, &sol, &[1.0]).unwrap();
        let path = variance_path(&k.chain, &[1.0], &sol.stationary, 400);
        let slope = path[400] - path[399];
        assert!((rate - slope).abs() < 1e-9, "{rate} vs {slope}");
    }
}
