//! The defragmented chain `Z`.
//!
//! `N_1 = 2 + θ^ε(X_0)` and `N_{k+1} = N_k + 2 + θ^ε(X_{N_k})`. Between
//! `N_n` and `N_{n+1}` the chain follows the same noisy recursion as `X`;
//! at `N_{n+1}` an independent shift `I_{n+1}` with `P(I = σ_0(i)) = |E_i|`
//! is subtracted. The recursion gives `X_{N_n} − Z_n = Σ_{k≤n} I_k`, which
//! is stored as [`ZRecord::shift`].

use serde::Serialize;

use super::noise::{trajectory_streams, NoiseSource};
use super::SplitPoint;
use crate::map_core::{BernoulliMap, MapError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZRecord {
    pub n: usize,
    /// `N_n` (with `N_0 = 0`).
    pub big_n: usize,
    pub z_cube: Vec<i64>,
    /// Common fractional part of `Z_n` and `X_{N_n}`.
    pub frac: Vec<f64>,
    pub x_cube: Vec<i64>,
    /// `Σ_{k≤n} I_k = X_{N_n} − Z_n`.
    pub shift: Vec<i64>,
}

impl ZRecord {
    pub fn z(&self) -> Vec<f64> {
        self.z_cube.iter().zip(&self.frac).map(|(c, f)| *c as f64 + f).collect()
    }

    pub fn x(&self) -> Vec<f64> {
        self.x_cube.iter().zip(&self.frac).map(|(c, f)| *c as f64 + f).collect()
    }

    /// The lattice bookkeeping, in integer arithmetic.
    pub fn invariant_holds(&self) -> bool {
        self.x_cube.iter().zip(&self.z_cube).zip(&self.shift).all(|((x, z), s)| x - z == *s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZTrace {
    pub eps: f64,
    pub records: Vec<ZRecord>,
    /// `X_0, …, X_{N_last}` when requested.
    pub path: Option<Vec<Vec<f64>>>,
}

impl ZTrace {
    /// `N_{n+1} − N_n` for every simulated step.
    pub fn increments(&self) -> Vec<usize> {
        self.records.windows(2).map(|w| w[1].big_n - w[0].big_n).collect()
    }
}

/// Index of the cell selected by a uniform draw, by cumulative volume.
pub(crate) fn draw_cell(map: &BernoulliMap, u: f64) -> usize {
    let mut acc = 0.0;
    for c in map.cells() {
        acc += c.volume;
        if u < acc {
            return c.index;
        }
    }
    map.num_cells() - 1
}

/// `Z_0, …, Z_{z_steps}` along trajectory 0 of `seed`.
pub fn simulate_z(
    map: &BernoulliMap,
    x0: &[f64],
    eps: f64,
    z_steps: usize,
    seed: u64,
    keep_path: bool,
) -> Result<ZTrace, MapError> {
    simulate_z_trajectory(map, x0, eps, z_steps, seed, 0, keep_path)
}

pub fn simulate_z_trajectory(
    map: &BernoulliMap,
    x0: &[f64],
    eps: f64,
    z_steps: usize,
    seed: u64,
    trajectory: u64,
    keep_path: bool,
) -> Result<ZTrace, MapError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(MapError::NonpositiveEpsilon { eps });
    }
    if eps >= 1.0 {
        return Err(MapError::EpsilonOutOfRange { eps });
    }
    let d = x0.len();
    let (mut noise, mut aux) = trajectory_streams(seed, trajectory);
    let mut x = SplitPoint::new(x0);
    let mut shift = vec![0i64; d];
    let mut buf = vec![0.0; d];
    let mut path = keep_path.then(|| vec![x.to_point()]);
    let mut big_n = 0usize;
    let record = |n: usize, big_n: usize, x: &SplitPoint, shift: &[i64]| ZRecord {
        n,
        big_n,
        z_cube: x.cube.iter().zip(shift).map(|(c, s)| c - s).collect(),
        frac: x.frac.clone(),
        x_cube: x.cube.clone(),
        shift: shift.to_vec(),
    };
    let mut records = vec![record(0, 0, &x, &shift)];
    for n in 1..=z_steps {
        let theta = map.theta_eps(&x.frac, eps)?;
        for _ in 0..2 + theta {
            x.advance(map, eps, &mut noise, &mut buf);
            if let Some(p) = path.as_mut() {
                p.push(x.to_point());
            }
        }
        big_n += 2 + theta;
        let i = draw_cell(map, aux.uniform());
        for (s, t) in shift.iter_mut().zip(&map.cells()[i].target) {
            *s += t;
        }
        records.push(record(n, big_n, &x, &shift));
    }
    Ok(ZTrace { eps, records, path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::{asymmetric, doubling};

    #[test]
    fn first_stopping_time() {
        let t = simulate_z(&doubling(), &[0.3], 0.1, 3, 1, false).unwrap();
        assert_eq!(t.records[1].big_n, 6);
        assert!(t.records.iter().all(ZRecord::invariant_holds));
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(matches!(simulate_z(&doubling(), &[0.3], 0.0, 3, 1, false), Err(MapError::NonpositiveEpsilon { .. })));
    }

    #[test]
    fn path_is_consistent_with_records() {
        let t = simulate_z(&asymmetric(), &[0.2], 0.05, 5, 4, true).unwrap();
        let path = t.path.as_ref().unwrap();
        for r in &t.records {
            let x = &path[r.big_n];
            assert!((x[0] - r.x()[0]).abs() < 1e-12);
            assert_eq!(r.x_cube[0] - r.z_cube[0], r.shift[0]);
            assert!((r.x()[0] - r.z()[0] - r.shift[0] as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn increments_respect_theta_bounds() {
        let m = asymmetric();
        let eps = 0.03;
        let t = simulate_z(&m, &[0.41], eps, 200, 8, false).unwrap();
        let d = 1.0;
        let lo = d * eps.ln() / m.smallest_volume().ln() + 1.0;
        let hi = d * eps.ln() / m.largest_volume().ln() + 3.0;
        for inc in t.increments() {
            assert!((inc as f64) > lo && (inc as f64) < hi, "{inc} not in ({lo}, {hi})");
        }
    }
}
