use nalgebra::DMatrix;

use super::mixing::DENSE_LIMIT;
use super::{LatticeChain, SparseMatrix, TransferError};

pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const DEFAULT_SERIES_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectorMode {
    /// `(I − P + 1πᵀ) χ = s − s̄`, dense LU.
    Linear,
    /// `χ = Σ_{n≥0} P^n (s − s̄)`, stopped once a term is below `tol` in sup norm.
    Series { tol: f64, cap: usize },
}

impl CorrectorMode {
    pub fn series() -> Self {
        CorrectorMode::Series { tol: DEFAULT_SERIES_TOL, cap: DEFAULT_SERIES_CAP }
    }
}

/// Grid functions are stored row-major `states × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSolution {
    pub dim: usize,
    pub states: usize,
    /// `s(g) = E^g (Y_1 − Y_0)`.
    pub drift: Vec<f64>,
    /// `s̄ = Σ_g π(g) s(g)`.
    pub mean_drift: Vec<f64>,
    pub chi: Vec<f64>,
    /// Stationary distribution of the torus chain.
    pub stationary: Vec<f64>,
    /// `‖(P − I)χ − (s̄ − s)‖_∞`.
    pub residual: f64,
    /// Terms summed in series mode (0 in linear mode).
    pub terms: usize,
}

impl CorrectorSolution {
    pub fn chi_at(&self, g: usize) -> &[f64] {
        &self.chi[g * self.dim..(g + 1) * self.dim]
    }
}

/// `π` with `π P = π`, `Σ π = 1`.
///
/// Dense LU on `(Pᵀ − I)` with the last equation replaced by the
/// normalisation; power iteration above the dense limit.
pub fn stationary_distribution(p: &SparseMatrix) -> Result<Vec<f64>, TransferError> {
    let n = p.n;
    if n <= DENSE_LIMIT {
        let mut a = p.to_dense().transpose();
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = nalgebra::DVector::zeros(n);
        b[n - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or(TransferError::SingularSystem)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(TransferError::SingularSystem);
        }
        Ok(x.iter().copied().collect())
    } else {
        let mut mu = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..DEFAULT_SERIES_CAP {
            p.left_apply(&mu, &mut next);
            let change: f64 = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut mu, &mut next);
            if change < 1e-15 {
                return Ok(mu);
            }
        }
        Err(TransferError::SeriesDivergence { cap: DEFAULT_SERIES_CAP })
    }
}

/// Solves `Lχ = s̄ − s` with `L = P − I` and `π·χ = 0`.
pub fn corrector_solve(chain: &LatticeChain, mode: CorrectorMode) -> Result<CorrectorSolution, TransferError> {
    let d = chain.dim();
    let n = chain.states();
    let p = chain.torus_matrix();
    let pi = stationary_distribution(&p)?;
    let drift = chain.drift();
    let mean_drift: Vec<f64> = (0..d).map(|k| (0..n).map(|g| pi[g] * drift[g * d + k]).sum()).collect();
    let centred: Vec<f64> = (0..n * d).map(|e| drift[e] - mean_drift[e % d]).collect();

    let (chi, terms) = match mode {
        CorrectorMode::Linear => {
            if n > DENSE_LIMIT {
                return Err(TransferError::TooLarge { states: n });
            }
            let mut a = -p.to_dense();
            for i in 0..n {
                a[(i, i)] += 1.0;
                for j in 0..n {
                    a[(i, j)] += pi[j];
                }
            }
            let rhs = DMatrix::from_fn(n, d, |g, k| centred[g * d + k]);
            let x = a.lu().solve(&rhs).ok_or(TransferError::SingularSystem)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(TransferError::SingularSystem);
            }
            ((0..n * d).map(|e| x[(e / d, e % d)]).collect::<Vec<f64>>(), 0)
        }
        CorrectorMode::Series { tol, cap } => {
            let mut chi = vec![0.0; n * d];
            let mut terms = 0;
            let mut converged = false;
            let mut col = vec![0.0; n];
            let mut next = vec![0.0; n];
            for k in 0..d {
                for g in 0..n {
                    col[g] = centred[g * d + k];
                }
                converged = false;
                for t in 0..cap {
                    for g in 0..n {
                        chi[g * d + k] += col[g];
                    }
                    let sup = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                    if sup < tol {
                        terms = terms.max(t + 1);
                        converged = true;
                        break;
                    }
                    p.apply(&col, &mut next);
                    std::mem::swap(&mut col, &mut next);
                }
                if !converged {
                    break;
                }
            }
            if !converged {
                return Err(TransferError::SeriesDivergence { cap });
            }
            (chi, terms)
        }
    };

    let residual = residual(&p, &drift, &mean_drift, &chi, d);
    Ok(CorrectorSolution { dim: d, states: n, drift, mean_drift, chi, stationary: pi, residual, terms })
}

fn residual(p: &SparseMatrix, s: &[f64], s_bar: &[f64], chi: &[f64], d: usize) -> f64 {
    let n = p.n;
    let mut worst: f64 = 0.0;
    let mut col = vec![0.0; n];
    let mut pc = vec![0.0; n];
    for k in 0..d {
        for g in 0..n {
            col[g] = chi[g * d + k];
        }
        p.apply(&col, &mut pc);
        for g in 0..n {
            let r = pc[g] - col[g] - (s_bar[k] - s[g * d + k]);
            worst = worst.max(r.abs());
        }
    }
    worst
}
