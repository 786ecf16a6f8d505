//! Finite-state chains with lattice displacements.
//!
//! A state `g` carries a reference position `c(g)`; a transition
//! `(g → g', j)` with probability `q(g, g', j)` moves the walk from
//! `j_0 + c(g)` to `j_0 + j + c(g')`. Torus kernels and the exact oracle
//! specs share this representation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub to: usize,
    pub jump: &'a [i64],
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeChain {
    dim: usize,
    positions: Vec<f64>,
    row_ptr: Vec<usize>,
    targets: Vec<usize>,
    jumps: Vec<i64>,
    probs: Vec<f64>,
}

/// Row-stochastic matrix in compressed row form, columns sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `P f` for a column vector `f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().with_min_len(64).for_each(|(i, o)| {
            *o = self.row(i).map(|(j, p)| p * f[j]).sum();
        });
    }

    /// `μ P` for a row vector `μ`, accumulated row by row in index order.
    pub fn left_apply(&self, mu: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, m) in mu.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += m * p;
            }
        }
    }

    /// `M P` for a dense row-major `n × n` matrix `M`.
    pub fn right_multiply_dense(&self, m: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.par_chunks_mut(n).zip(m.par_chunks(n)).for_each(|(o, row)| self.left_apply(row, o));
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, p) in self.row(i) {
                d[(i, j)] += p;
            }
        }
        d
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, p) in self.row(i) {
                s[j] += p;
            }
        }
        s
    }
}

impl LatticeChain {
    /// Builds a chain from per-state transition lists `(to, jump, prob)`.
    pub fn from_rows(dim: usize, positions: Vec<f64>, rows: Vec<Vec<(usize, Vec<i64>, f64)>>) -> Self {
        assert_eq!(positions.len(), rows.len() * dim, "one position per state");
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::new();
        let mut jumps = Vec::new();
        let mut probs = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (to, jump, p) in row {
                assert_eq!(jump.len(), dim);
                targets.push(to);
                jumps.extend(jump);
                probs.push(p);
            }
            row_ptr.push(targets.len());
        }
        LatticeChain { dim, positions, row_ptr, targets, jumps, probs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.probs.len()
    }

    pub fn position(&self, g: usize) -> &[f64] {
        &self.positions[g * self.dim..(g + 1) * self.dim]
    }

    pub fn row(&self, g: usize) -> impl Iterator<Item = Transition<'_>> + '_ {
        let d = self.dim;
        (self.row_ptr[g]..self.row_ptr[g + 1]).map(move |e| Transition {
            to: self.targets[e],
            jump: &self.jumps[e * d..(e + 1) * d],
            prob: self.probs[e],
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.states()).map(|g| self.row(g).map(|t| t.prob).sum()).collect()
    }

    /// Smallest box `[lo, hi]` containing every jump with positive mass.
    pub fn jump_window(&self) -> (Vec<i64>, Vec<i64>) {
        let d = self.dim;
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for e in 0..self.nnz() {
            for a in 0..d {
                lo[a] = lo[a].min(self.jumps[e * d + a]);
                hi[a] = hi[a].max(self.jumps[e * d + a]);
            }
        }
        (lo, hi)
    }

    /// The torus marginal `P[g, g'] = Σ_j q(g, g', j)`.
    pub fn torus_matrix(&self) -> SparseMatrix {
        let n = self.states();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for g in 0..n {
            acc.clear();
            for t in self.row(g) {
                *acc.entry(t.to).or_insert(0.0) += t.prob;
            }
            for (&c, &v) in &acc {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    /// `Δ(g, g', j) = j + c(g') − c(g)`, written into `out`.
    #[inline]
    pub fn increment(&self, g: usize, t: &Transition<'_>, out: &mut [f64]) {
        let (a, b) = (self.position(g), self.position(t.to));
        for k in 0..self.dim {
            out[k] = t.jump[k] as f64 + b[k] - a[k];
        }
    }

    /// `v · Δ` for every stored transition, in row order.
    pub fn projected_increments(&self, v: &[f64]) -> Vec<f64> {
        let mut inc = vec![0.0; self.dim];
        let mut out = Vec::with_capacity(self.nnz());
        for g in 0..self.states() {
            for t in self.row(g) {
                self.increment(g, &t, &mut inc);
                out.push(inc.iter().zip(v).map(|(a, b)| a * b).sum());
            }
        }
        out
    }

    /// Drift `s(g) = E^g Δ_0`, row-major `states × d`.
    pub fn drift(&self) -> Vec<f64> {
        let d = self.dim;
        let mut s = vec![0.0; self.states() * d];
        let mut inc = vec![0.0; d];
        for g in 0..self.states() {
            for t in self.row(g) {
                self.increment(g, &t, &mut inc);
                for k in 0..d {
                    s[g * d + k] += t.prob * inc[k];
                }
            }
        }
        s
    }

    /// `E^g |Δ_0|²`.
    pub fn increment_second_moment(&self) -> Vec<f64> {
        let mut inc = vec![0.0; self.dim];
        (0..self.states())
            .map(|g| {
                self.row(g)
                    .map(|t| {
                        self.increment(g, &t, &mut inc);
                        t.prob * inc.iter().map(|x| x * x).sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    /// Two-step chain `q₂(g, g'', j + j') = Σ q(g, g', j) q'(g', g'', j')`.
    pub fn compose(&self, other: &LatticeChain) -> LatticeChain {
        assert_eq!(self.states(), other.states());
        assert_eq!(self.dim, other.dim);
        let rows = (0..self.states())
            .map(|g| {
                let mut acc: BTreeMap<(usize, Vec<i64>), f64> = BTreeMap::new();
                for t in self.row(g) {
                    for u in other.row(t.to) {
                        let jump: Vec<i64> = t.jump.iter().zip(u.jump).map(|(a, b)| a + b).collect();
                        *acc.entry((u.to, jump)).or_insert(0.0) += t.prob * u.prob;
                    }
                }
                acc.into_iter().map(|((to, j), p)| (to, j, p)).collect()
            })
            .collect();
        LatticeChain::from_rows(self.dim, self.positions.clone(), rows)
    }

    /// Chain whose rows are those of `K^{h(g)}` (a state-dependent number of
    /// steps of `self`), with `h(g) ≥ 1`.
    pub fn stopped(&self, h: &[usize]) -> LatticeChain {
        assert_eq!(h.len(), self.states());
        let max = h.iter().copied().max().unwrap_or(1);
        let mut powers = vec![self.clone()];
        while powers.len() < max {
            let next = powers.last().unwrap().compose(self);
            powers.push(next);
        }
        let rows = (0..self.states())
            .map(|g| {
                let p = &powers[h[g] - 1];
                p.row(g).map(|t| (t.to, t.jump.to_vec(), t.prob)).collect()
            })
            .collect();
        LatticeChain::from_rows(self.dim, self.positions.clone(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state() -> LatticeChain {
        LatticeChain::from_rows(
            1,
            vec![0.25, 0.75],
            vec![
                vec![(0, vec![0], 0.5), (1, vec![1], 0.5)],
                vec![(0, vec![-1], 0.3), (1, vec![0], 0.7)],
            ],
        )
    }

    #[test]
    fn torus_marginal_and_drift() {
        let c = two_state();
        let p = c.torus_matrix();
        let d = p.to_dense();
        assert_eq!(d[(0, 1)], 0.5);
        assert_eq!(d[(1, 0)], 0.3);
        let s = c.drift();
        assert!((s[0] - 0.5 * 1.5).abs() < 1e-15);
        assert!((s[1] - 0.3 * (-1.5)).abs() < 1e-15);
        assert_eq!(c.jump_window(), (vec![-1], vec![1]));
    }

    #[test]
    fn composition_squares_the_marginal() {
        let c = two_state();
        let two = c.compose(&c).torus_matrix().to_dense();
        let p = c.torus_matrix().to_dense();
        assert!((two - &p * &p).amax() < 1e-15);
    }

    #[test]
    fn sparse_products() {
        let p = two_state().torus_matrix();
        let mut out = vec![0.0; 2];
        p.left_apply(&[1.0, 0.0], &mut out);
        assert_eq!(out, vec![0.5, 0.5]);
        p.apply(&[1.0, 2.0], &mut out);
        assert_eq!(out, vec![1.5, 1.7]);
        let eye = [1.0, 0.0, 0.0, 1.0];
        let mut m = vec![0.0; 4];
        p.right_multiply_dense(&eye, &mut m);
        assert_eq!(m, vec![0.5, 0.5, 0.3, 0.7]);
    }

    #[test]
    fn stopped_chain_uses_state_dependent_powers() {
        let c = two_state();
        let s = c.stopped(&[1, 2]);
        let two = c.compose(&c);
        let r0: Vec<_> = s.row(0).map(|t| t.prob).collect();
        let r1: Vec<_> = s.row(1).map(|t| t.prob).collect();
        assert_eq!(r0, c.row(0).map(|t| t.prob).collect::<Vec<_>>());
        assert_eq!(r1, two.row(1).map(|t| t.prob).collect::<Vec<_>>());
    }
}
