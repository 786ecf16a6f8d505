use std::collections::BTreeMap;

use num::{BigRational, One, Zero};

use super::DiffusivityError;
use crate::map_core::ratio_to_f64;

/// Tolerance on the total mass of a float distribution.
pub const MASS_TOL: f64 = 1e-12;

/// Finitely supported probability distribution on `Z^d`, optionally carrying
/// exact rational weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDistribution {
    dim: usize,
    atoms: BTreeMap<Vec<i64>, f64>,
    exact: Option<BTreeMap<Vec<i64>, BigRational>>,
}

impl LatticeDistribution {
    pub fn new(dim: usize, atoms: BTreeMap<Vec<i64>, f64>) -> Result<Self, DiffusivityError> {
        let total: f64 = atoms.values().sum();
        if (total - 1.0).abs() > MASS_TOL
            || atoms.values().any(|p| !(*p >= 0.0))
            || atoms.keys().any(|k| k.len() != dim)
        {
            return Err(DiffusivityError::InvalidDistribution { total });
        }
        Ok(LatticeDistribution { dim, atoms, exact: None })
    }

    pub fn from_exact(dim: usize, exact: BTreeMap<Vec<i64>, BigRational>) -> Result<Self, DiffusivityError> {
        let total: BigRational = exact.values().fold(BigRational::zero(), |a, b| a + b);
        if !total.is_one() || exact.values().any(|p| *p < BigRational::zero()) || exact.keys().any(|k| k.len() != dim) {
            return Err(DiffusivityError::InvalidDistribution { total: ratio_to_f64(&total) });
        }
        let atoms = exact.iter().map(|(k, p)| (k.clone(), ratio_to_f64(p))).collect();
        Ok(LatticeDistribution { dim, atoms, exact: Some(exact) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[i64], f64)> + '_ {
        self.atoms.iter().map(|(k, p)| (k.as_slice(), *p))
    }

    pub fn exact_atoms(&self) -> Option<&BTreeMap<Vec<i64>, BigRational>> {
        self.exact.as_ref()
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    pub fn prob(&self, k: &[i64]) -> f64 {
        self.atoms.get(k).copied().unwrap_or(0.0)
    }

    pub fn exact_prob(&self, k: &[i64]) -> Option<BigRational> {
        self.exact.as_ref().map(|e| e.get(k).cloned().unwrap_or_else(BigRational::zero))
    }

    pub fn shifted(&self, m: &[i64]) -> Self {
        let shift = |k: &Vec<i64>| k.iter().zip(m).map(|(a, b)| a + b).collect::<Vec<_>>();
        LatticeDistribution {
            dim: self.dim,
            atoms: self.atoms.iter().map(|(k, p)| (shift(k), *p)).collect(),
            exact: self.exact.as_ref().map(|e| e.iter().map(|(k, p)| (shift(k), p.clone())).collect()),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (k, p) in &self.atoms {
            for (mi, ki) in m.iter_mut().zip(k) {
                *mi += p * *ki as f64;
            }
        }
        m
    }

    pub fn covariance(&self) -> DiffusionMatrix {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for (k, p) in &self.atoms {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += p * (k[i] as f64 - m[i]) * (k[j] as f64 - m[j]);
                }
            }
        }
        let exact = self.exact.as_ref().map(|e| exact_covariance(d, e.iter().map(|(k, p)| (k.as_slice(), p))));
        DiffusionMatrix { dim: d, entries: c, exact }
    }

    /// Distribution of the sum of independent draws from `self` and `other`.
    pub fn convolve(&self, other: &LatticeDistribution) -> LatticeDistribution {
        let add = |a: &[i64], b: &[i64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let mut atoms = BTreeMap::new();
        for (a, p) in &self.atoms {
            for (b, q) in &other.atoms {
                *atoms.entry(add(a, b)).or_insert(0.0) += p * q;
            }
        }
        let exact = match (&self.exact, &other.exact) {
            (Some(x), Some(y)) => {
                let mut out: BTreeMap<Vec<i64>, BigRational> = BTreeMap::new();
                for (a, p) in x {
                    for (b, q) in y {
                        *out.entry(add(a, b)).or_insert_with(BigRational::zero) += p * q;
                    }
                }
                Some(out)
            }
            _ => None,
        };
        match exact {
            Some(e) => LatticeDistribution {
                dim: self.dim,
                atoms: e.iter().map(|(k, p)| (k.clone(), ratio_to_f64(p))).collect(),
                exact: Some(e),
            },
            None => LatticeDistribution { dim: self.dim, atoms, exact: None },
        }
    }
}

pub(crate) fn exact_covariance<'a>(
    d: usize,
    atoms: impl Iterator<Item = (&'a [i64], &'a BigRational)> + Clone,
) -> Vec<BigRational> {
    let int = |x: i64| BigRational::from_integer(x.into());
    let mut m = vec![BigRational::zero(); d];
    for (k, p) in atoms.clone() {
        for i in 0..d {
            m[i] += p * int(k[i]);
        }
    }
    let mut c = vec![BigRational::zero(); d * d];
    for (k, p) in atoms {
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] += p * int(k[i]) * int(k[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            c[i * d + j] -= &m[i] * &m[j];
        }
    }
    c
}

/// Symmetric `d × d` matrix, row-major, with an optional exact form.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    pub dim: usize,
    pub entries: Vec<f64>,
    pub exact: Option<Vec<BigRational>>,
}

impl DiffusionMatrix {
    pub fn zero(dim: usize) -> Self {
        DiffusionMatrix { dim, entries: vec![0.0; dim * dim], exact: Some(vec![BigRational::zero(); dim * dim]) }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn exact_entry(&self, i: usize, j: usize) -> Option<&BigRational> {
        self.exact.as_ref().map(|e| &e[i * self.dim + j])
    }

    /// `v · D v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += v[i] * self.entries[i * d + j] * v[j];
            }
        }
        s
    }

    pub fn scaled(&self, factor: f64, exact_factor: Option<&BigRational>) -> Self {
        DiffusionMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x * factor).collect(),
            exact: match (&self.exact, exact_factor) {
                (Some(e), Some(f)) => Some(e.iter().map(|x| x * f).collect()),
                _ => None,
            },
        }
    }

    pub fn max_abs_diff(&self, other: &DiffusionMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}
