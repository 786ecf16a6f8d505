//! The noisy process `X_{n+1} = φ(X_n) + ε ξ_{n+1}`, its deterministic limit
//! and the defragmented chain `Z`.
//!
//! Positions are carried as an integer cube plus a fractional part, so the
//! fractional part keeps full precision however far the walk travels.

mod ensemble;
mod noise;
mod trace;
mod zchain;

pub use ensemble::{
    simulate_ensemble, simulate_paths, DirectionalVariance, EnsembleReport, EnsembleSpec, InitialLaw,
    MomentAccumulator, MomentSnapshot,
};
pub(crate) use ensemble::batch_std_error;
pub use noise::{trajectory_streams, InjectedNoise, NoiseSource, NoiseStream};
pub use trace::{read_trace, write_trace, TraceHeader, TRACE_MAGIC};
pub use zchain::{simulate_z, ZRecord, ZTrace};

use crate::map_core::PeriodicMap;
use crate::numerics::split_scalar;

/// A point of `R^d` split as `cube + frac`, `frac ∈ [0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPoint {
    pub cube: Vec<i64>,
    pub frac: Vec<f64>,
}

impl SplitPoint {
    pub fn new(x: &[f64]) -> Self {
        let (cube, frac) = x.iter().map(|v| split_scalar(*v)).unzip();
        SplitPoint { cube, frac }
    }

    pub fn to_point(&self) -> Vec<f64> {
        self.cube.iter().zip(&self.frac).map(|(c, f)| *c as f64 + f).collect()
    }

    /// Adds `delta` to the fractional part and renormalizes.
    pub fn nudge(&mut self, delta: &[f64]) {
        for ((c, f), d) in self.cube.iter_mut().zip(self.frac.iter_mut()).zip(delta) {
            let (dc, nf) = split_scalar(*f + d);
            *c += dc;
            *f = nf;
        }
    }

    /// One step of the chain in place; returns the local expansion bound.
    #[inline]
    pub fn advance<M, N>(&mut self, map: &M, eps: f64, noise: &mut N, buf: &mut [f64]) -> f64
    where
        M: PeriodicMap + ?Sized,
        N: NoiseSource + ?Sized,
    {
        let expansion = map.apply_unit(&self.frac, buf);
        if eps != 0.0 {
            for b in buf.iter_mut() {
                *b += eps * noise.normal();
            }
        }
        for ((c, f), b) in self.cube.iter_mut().zip(self.frac.iter_mut()).zip(buf.iter()) {
            let (dc, nf) = split_scalar(*b);
            *c += dc;
            *f = nf;
        }
        expansion
    }
}

/// `φ(x) + ε ξ` with `ξ` drawn from `noise` (no draw when `ε = 0`).
pub fn step<M, N>(map: &M, x: &[f64], eps: f64, noise: &mut N) -> Vec<f64>
where
    M: PeriodicMap + ?Sized,
    N: NoiseSource + ?Sized,
{
    let mut y = map.apply(x);
    if eps != 0.0 {
        for v in y.iter_mut() {
            *v += eps * noise.normal();
        }
    }
    y
}

/// `X^0_1, …, X^0_n`.
pub fn deterministic_orbit<M: PeriodicMap + ?Sized>(map: &M, x: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut cur = x.to_vec();
    for _ in 0..n {
        cur = map.apply(&cur);
        out.push(cur.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::{asymmetric, doubling, ShearMap};

    #[test]
    fn step_examples() {
        let m = doubling();
        let mut none = InjectedNoise::default();
        assert_eq!(step(&m, &[0.3], 0.0, &mut none), vec![0.6]);
        let y = step(&m, &[0.3], 0.1, &mut InjectedNoise::new(vec![1.0]));
        assert!((y[0] - 0.7).abs() < 1e-15);
        let y = step(&ShearMap::default(), &[0.0, 0.25], 0.0, &mut none);
        assert!((y[0] - 1.0).abs() < 1e-15 && y[1] == 0.25);
    }

    #[test]
    fn orbit_examples() {
        let o = deterministic_orbit(&doubling(), &[1.0 / 3.0], 3);
        let want = [2.0 / 3.0, 4.0 / 3.0, 5.0 / 3.0];
        for (a, b) in o.iter().zip(want) {
            assert!((a[0] - b).abs() < 1e-14);
        }
        assert!(deterministic_orbit(&doubling(), &[0.2], 0).is_empty());
        assert_eq!(deterministic_orbit(&asymmetric(), &[0.0], 5), vec![vec![0.0]; 5]);
    }

    #[test]
    fn split_advance_matches_step() {
        let m = asymmetric();
        let mut p = SplitPoint::new(&[-3.4]);
        let mut x = vec![-3.4];
        let mut a = NoiseStream::new(5, 0);
        let mut b = NoiseStream::new(5, 0);
        let mut buf = [0.0];
        for _ in 0..10 {
            p.advance(&m, 0.05, &mut a, &mut buf);
            x = step(&m, &x, 0.05, &mut b);
            assert!((p.to_point()[0] - x[0]).abs() < 1e-9);
        }
    }
}
