use nalgebra::DMatrix;

use super::{SparseMatrix, TransferError};

pub const MIXING_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIXING_CAP: usize = 10_000;
/// Largest state count for which dense matrices are formed.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingMode {
    /// Every indicator row is propagated through the sparse matrix.
    Matvec,
    /// Dense matrix powers.
    DensePowering,
}

fn max_row_distance_rows(m: &[f64], n: usize) -> f64 {
    let u = 1.0 / n as f64;
    m.chunks(n).map(|row| row.iter().map(|x| (x - u).abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn max_row_distance_dense(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let u = 1.0 / n as f64;
    (0..n).map(|i| m.row(i).iter().map(|x| (x - u).abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Iterates `t ↦ max_g Σ_{g'} |P^t[g, g'] − 1/N|` for `t = 1, 2, …` until
/// `visit` returns `false` or `cap` steps have been taken.
fn walk_distances<F>(p: &SparseMatrix, cap: usize, mode: MixingMode, mut visit: F) -> Result<(), TransferError>
where
    F: FnMut(usize, f64) -> bool,
{
    let n = p.n;
    match mode {
        MixingMode::Matvec => {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = 1.0;
            }
            let mut next = vec![0.0; n * n];
            for t in 1..=cap {
                p.right_multiply_dense(&m, &mut next);
                std::mem::swap(&mut m, &mut next);
                if !visit(t, max_row_distance_rows(&m, n)) {
                    break;
                }
            }
        }
        MixingMode::DensePowering => {
            if n > DENSE_LIMIT {
                return Err(TransferError::TooLarge { states: n });
            }
            let dense = p.to_dense();
            let mut m = dense.clone();
            for t in 1..=cap {
                if !visit(t, max_row_distance_dense(&m)) {
                    break;
                }
                m = &m * &dense;
            }
        }
    }
    Ok(())
}

/// Smallest `T` with `max_g ‖P^T(g, ·) − uniform‖_{L1} < threshold`.
pub fn mixing_time(p: &SparseMatrix, threshold: f64, cap: usize, mode: MixingMode) -> Result<usize, TransferError> {
    let mut found = None;
    walk_distances(p, cap, mode, |t, dist| {
        if dist < threshold {
            found = Some(t);
            false
        } else {
            true
        }
    })?;
    found.ok_or(TransferError::NoMixingWithinCap { cap })
}

/// `sup_g ‖P^t(g, ·) − uniform‖_{L1}` for `t = 0, …, steps`.
pub fn distance_profile(p: &SparseMatrix, steps: usize, mode: MixingMode) -> Result<Vec<f64>, TransferError> {
    let n = p.n;
    let mut out = vec![2.0 * (1.0 - 1.0 / n as f64)];
    if steps > 0 {
        walk_distances(p, steps, mode, |_, d| {
            out.push(d);
            true
        })?;
    }
    Ok(out)
}

/// Dense for small chains, sparse propagation otherwise.
pub fn default_mode(states: usize) -> MixingMode {
    if states <= DENSE_LIMIT {
        MixingMode::DensePowering
    } else {
        MixingMode::Matvec
    }
}
