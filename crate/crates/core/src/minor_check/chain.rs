use super::{push_density, BumpFamily, GridDensity, MinorError, BOUNDARY_LAYER, DEFAULT_TAIL_TOL};
use crate::map_core::{BernoulliMap, PeriodicMap, SymbolTuple};

/// `β = exp(−1/(1 − |E_M|^{2/d}))`.
pub fn beta_theory(map: &BernoulliMap) -> f64 {
    let d = map.dim() as f64;
    (-1.0 / (1.0 - map.largest_volume().powf(2.0 / d))).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BumpStep {
    pub n: usize,
    /// `λ` of the source cylinder `σ^{n−1}(k,s)`.
    pub lambda: f64,
    /// `min T_{*,ε} F_{σ^{n−1}(k,s)} / F_{σ^n(k,s)}` over interior cells.
    pub one_step_ratio: f64,
    /// `min T^n_{*,ε} F_{k,s} / F_{σ^n(k,s)}` over interior cells; the
    /// excluded layer is the image of the initial boundary layer.
    pub cumulative_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BumpChainReport {
    pub eps: f64,
    pub steps: Vec<BumpStep>,
    /// `max_n −ln(ratio_n)/(λ_n ε)²`; zero when `ε = 0`.
    pub a_fit: f64,
    /// Cumulative ratio at `n = |s|`.
    pub beta_emp: f64,
    pub beta_theory: f64,
    /// `|1 − mass(T^{|s|} F_{k,s})|`.
    pub mass_error: f64,
}

impl BumpChainReport {
    /// `β_emp ≥ β_theory − slack`.
    pub fn passes(&self, slack: f64) -> bool {
        self.beta_emp >= self.beta_theory - slack
    }

    /// Every one-step ratio is at least `exp(−a(λε)²)` (up to `tol` relative).
    pub fn ratios_above(&self, a: f64, tol: f64) -> bool {
        self.steps
            .iter()
            .all(|s| s.one_step_ratio >= (-a * (s.lambda * self.eps).powi(2)).exp() * (1.0 - tol))
    }
}

fn min_ratio(f: &GridDensity, reference: &GridDensity, support: (f64, f64), layer: usize) -> f64 {
    let r = reference.rewindow(f.lo.min(reference.lo), f.hi.max(reference.hi));
    let g = f.rewindow(r.lo, r.hi);
    g.cells_within(support.0, support.1, layer)
        .filter(|&i| r.values[i] > 0.0)
        .map(|i| g.values[i] / r.values[i])
        .fold(f64::INFINITY, f64::min)
}

/// Propagates `F_{k,s}` by `T_{*,ε}` for `|s|` steps and compares with the
/// bumps on the shifted cylinders.
pub fn verify_bump_chain(
    map: &BernoulliMap,
    k: i64,
    s: &SymbolTuple,
    eps: f64,
    cells_per_unit: usize,
) -> Result<BumpChainReport, MinorError> {
    if map.dim() != 1 {
        return Err(MinorError::UnsupportedDimension { dim: map.dim() });
    }
    let family = BumpFamily::new(map);
    let first = map.cylinder(&[k], s)?;
    if first.side < eps {
        return Err(MinorError::HypothesisViolated { ell: first.side, eps });
    }
    let mut cyl = (vec![k], s.clone());
    let mut current = family.grid(k, s, cells_per_unit)?;
    let mut steps = Vec::with_capacity(s.len());
    for n in 1..=s.len() {
        let lambda = 1.0 / map.cylinder(&cyl.0, &cyl.1)?.side;
        let exact_prev = family.grid(cyl.0[0], &cyl.1, cells_per_unit)?;
        cyl = map.cylinder_shift(&cyl.0, &cyl.1).expect("nonempty tuple");
        let reference = family.grid(cyl.0[0], &cyl.1, cells_per_unit)?;
        let support = family.support(cyl.0[0], &cyl.1)?;
        let one = push_density(map, &exact_prev, eps, DEFAULT_TAIL_TOL)?;
        current = push_density(map, &current, eps, DEFAULT_TAIL_TOL)?;
        let grown = ((support.1 - support.0) / first.side).round() as usize * BOUNDARY_LAYER;
        steps.push(BumpStep {
            n,
            lambda,
            one_step_ratio: min_ratio(&one, &reference, support, BOUNDARY_LAYER),
            cumulative_ratio: min_ratio(&current, &reference, support, grown),
        });
    }
    let a_fit = if eps == 0.0 {
        0.0
    } else {
        steps
            .iter()
            .map(|st| -st.one_step_ratio.ln() / (st.lambda * eps).powi(2))
            .fold(0.0, f64::max)
    };
    let beta_emp = steps.last().map_or(1.0, |st| st.cumulative_ratio);
    Ok(BumpChainReport {
        eps,
        steps,
        a_fit,
        beta_emp,
        beta_theory: beta_theory(map),
        mass_error: (1.0 - current.mass()).abs(),
    })
}
