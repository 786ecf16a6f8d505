use std::fmt::Write as _;

use rayon::prelude::*;

use super::{d_w0, variance_rate_mc, DiffusivityError};
use crate::map_core::{BernoulliMap, PeriodicMap};
use crate::numerics::dot;
use crate::torus_transfer::{
    build_displacement_kernel, corrector_solve, default_mode, kv_rate, mixing_time, CorrectorMode, KernelOptions,
    UlamGrid, DEFAULT_MIXING_CAP, MIXING_THRESHOLD,
};

pub const SWEEP_CSV_HEADER: &str = "eps,rate,rate_se,kv_rate,lower_bound,envelope,t_mix,c_emp";

/// Constant in the upper law `rate ≤ C · t_mix · sup E|Δ_0|²`.
pub const UPPER_LAW_CONSTANT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strictly decreasing, in `(0, 1)`.
    pub eps: Vec<f64>,
    pub v: Vec<f64>,
    pub trajectories: usize,
    /// `n = steps_per_log · ⌈|ln ε|⌉`.
    pub steps_per_log: usize,
    pub seed: u64,
    /// Ulam grid for `kv_rate` and `t_mix`; `None` skips both.
    pub grid: Option<usize>,
    pub c_floor: f64,
    pub kernel: KernelOptions,
    pub mixing_cap: usize,
}

impl SweepConfig {
    pub fn new(eps: Vec<f64>, v: Vec<f64>, trajectories: usize, seed: u64) -> Self {
        SweepConfig {
            eps,
            v,
            trajectories,
            steps_per_log: 200,
            seed,
            grid: None,
            c_floor: 0.2,
            kernel: KernelOptions::default(),
            mixing_cap: DEFAULT_MIXING_CAP,
        }
    }

    pub fn steps(&self, eps: f64) -> usize {
        self.steps_per_log * (eps.ln().abs().ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub steps: usize,
    pub rate: f64,
    pub rate_se: f64,
    pub kv_rate: Option<f64>,
    /// `c_floor · v·D_{w^0}·v`.
    pub lower_bound: f64,
    /// `C_env |ln ε| |v|²`.
    pub envelope: f64,
    pub t_mix: Option<usize>,
    /// `rate / v·D_{w^0}·v`.
    pub c_emp: f64,
    /// `sup_g E^g |Δ_0|²` on the Ulam chain.
    pub increment_moment: Option<f64>,
}

impl SweepRow {
    /// `8 · t_mix · sup E|Δ_0|²`.
    pub fn upper_law(&self) -> Option<f64> {
        Some(UPPER_LAW_CONSTANT * self.t_mix? as f64 * self.increment_moment?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub v: Vec<f64>,
    /// `v·D_{w^0}·v`.
    pub dw0: f64,
    pub c_floor: f64,
    pub c_env: f64,
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepReport {
    pub fn min_c(&self) -> f64 {
        self.rows.iter().map(|r| r.c_emp).fold(f64::INFINITY, f64::min)
    }

    pub fn min_rate(&self) -> f64 {
        self.rows.iter().map(|r| r.rate).fold(f64::INFINITY, f64::min)
    }

    /// Failed assertions, one line each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rows {
            if self.dw0 > 0.0 && r.c_emp < self.c_floor {
                out.push(format!("eps={}: c_emp {} < c_floor {}", r.eps, r.c_emp, self.c_floor));
            }
            if r.rate > r.envelope + 3.0 * r.rate_se {
                out.push(format!("eps={}: rate {} above envelope {}", r.eps, r.rate, r.envelope));
            }
            if let Some(u) = r.upper_law() {
                if r.rate > u {
                    out.push(format!("eps={}: rate {} above 8 t_mix sup E|D|^2 = {}", r.eps, r.rate, u));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{SWEEP_CSV_HEADER}").unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt_f(r.eps),
                fmt_f(r.rate),
                fmt_f(r.rate_se),
                fmt_f(r.kv_rate.unwrap_or(f64::NAN)),
                fmt_f(r.lower_bound),
                fmt_f(r.envelope),
                r.t_mix.map_or_else(|| "NaN".to_string(), |t| t.to_string()),
                fmt_f(r.c_emp),
            )
            .unwrap();
        }
        s
    }
}

struct Partial {
    rate: super::RateEstimate,
    kv: Option<f64>,
    t_mix: Option<usize>,
    increment_moment: Option<f64>,
}

fn run_one(map: &BernoulliMap, cfg: &SweepConfig, eps: f64) -> Result<Partial, DiffusivityError> {
    let rate = variance_rate_mc(map, eps, &cfg.v, cfg.steps(eps), cfg.trajectories, cfg.seed)?;
    let (mut kv, mut t_mix, mut increment_moment) = (None, None, None);
    if let Some(g) = cfg.grid {
        if map.dim() <= 2 {
            let kernel = build_displacement_kernel(map, eps, UlamGrid::new(map.dim(), g), cfg.kernel)?;
            let p = kernel.chain.torus_matrix();
            let states = kernel.grid.states();
            t_mix = Some(mixing_time(&p, MIXING_THRESHOLD, cfg.mixing_cap, default_mode(states))?);
            increment_moment = Some(kernel.chain.increment_second_moment().into_iter().fold(0.0, f64::max));
            let sol = corrector_solve(&kernel.chain, CorrectorMode::Linear)?;
            kv = Some(kv_rate(&kernel.chain, &sol, &cfg.v)?);
        }
    }
    Ok(Partial { rate, kv, t_mix, increment_moment })
}

/// Variance rates over a decreasing list of noise levels, with the lower
/// bound `c_floor · v·D_{w^0}·v` and a logarithmic envelope fitted on the two
/// largest levels.
pub fn residual_sweep(map: &BernoulliMap, cfg: &SweepConfig) -> Result<SweepReport, DiffusivityError> {
    if cfg.eps.is_empty()
        || cfg.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0))
        || cfg.eps.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(DiffusivityError::BadEpsilonList);
    }
    let dw0 = d_w0(map).quadratic_form(&cfg.v);
    let partials: Vec<Partial> =
        cfg.eps.par_iter().map(|&e| run_one(map, cfg, e)).collect::<Result<_, _>>()?;
    let vv = dot(&cfg.v, &cfg.v);
    let c_env = cfg
        .eps
        .iter()
        .zip(&partials)
        .take(2)
        .map(|(e, p)| p.rate.rate / (e.ln().abs() * vv))
        .fold(0.0, f64::max);
    let rows = cfg
        .eps
        .iter()
        .zip(partials)
        .map(|(&eps, p)| SweepRow {
            eps,
            steps: p.rate.steps,
            rate: p.rate.rate,
            rate_se: p.rate.std_error,
            kv_rate: p.kv,
            lower_bound: cfg.c_floor * dw0,
            envelope: c_env * eps.ln().abs() * vv,
            t_mix: p.t_mix,
            c_emp: if dw0 > 0.0 { p.rate.rate / dw0 } else { f64::NAN },
            increment_moment: p.increment_moment,
        })
        .collect();
    Ok(SweepReport { rows, v: cfg.v.clone(), dw0, c_floor: cfg.c_floor, c_env })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::{doubling, no_drift_doubling};

    #[test]
    fn small_sweep_is_deterministic() {
        let mut cfg = SweepConfig::new(vec![0.2, 0.1], vec![1.0], 2_000, 11);
        cfg.steps_per_log = 20;
        cfg.grid = Some(64);
        let a = residual_sweep(&doubling(), &cfg).unwrap();
        let b = residual_sweep(&doubling(), &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv().lines().next(), Some(SWEEP_CSV_HEADER));
        assert_eq!(a.rows[0].steps, 40);
        assert!(a.rows.iter().all(|r| r.kv_rate.is_some() && r.t_mix.is_some()));
        assert_eq!(a.dw0, 0.25);
    }

    #[test]
    fn no_drift_rates_vanish_with_noise() {
        let mut cfg = SweepConfig::new(vec![0.2, 0.05], vec![1.0], 4_000, 2);
        cfg.steps_per_log = 20;
        let r = residual_sweep(&no_drift_doubling(), &cfg).unwrap();
        assert!(r.rows[1].rate < r.rows[0].rate);
        assert!(r.rows[1].rate < 0.4 * r.rows[0].rate, "{:?}", r.rows);
        assert!(r.rows[0].c_emp.is_nan());
    }

    #[test]
    fn rejects_unsorted_levels() {
        let cfg = SweepConfig::new(vec![0.1, 0.2], vec![1.0], 10, 0);
        assert_eq!(residual_sweep(&doubling(), &cfg), Err(DiffusivityError::BadEpsilonList));
    }
}
