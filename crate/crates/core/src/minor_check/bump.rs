use std::f64::consts::{FRAC_PI_2, PI};

use super::{GridDensity, MinorError};
use crate::map_core::{BernoulliMap, PeriodicMap, SymbolTuple};

/// `(π/2)^d`: unit mass of `F_*` on each cube.
pub fn c_norm(d: usize) -> f64 {
    FRAC_PI_2.powi(d as i32)
}

/// `F_*(x) = (π/2)^d Π |sin(π x_i)|`.
pub fn f_star(x: &[f64]) -> f64 {
    c_norm(x.len()) * x.iter().map(|xi| (PI * xi).sin().abs()).product::<f64>()
}

/// Bump densities `F_{k,s}` of one map.
#[derive(Debug, Clone, Copy)]
pub struct BumpFamily<'a> {
    pub map: &'a BernoulliMap,
}

impl<'a> BumpFamily<'a> {
    pub fn new(map: &'a BernoulliMap) -> Self {
        BumpFamily { map }
    }

    /// `|C_{k,s}|^{-1} 1_{C_{k,s}} F_* ∘ φ^{|s|}`, or `1_{Q_k} F_*` for empty `s`.
    pub fn f_ks(&self, k: &[i64], s: &SymbolTuple, x: &[f64]) -> Result<f64, MinorError> {
        let c = self.map.cylinder(k, s)?;
        if !c.contains(x) {
            return Ok(0.0);
        }
        let mut y = x.to_vec();
        for _ in 0..s.len() {
            y = self.map.apply(&y);
        }
        Ok(f_star(&y) / c.volume)
    }

    /// Support interval of `F_{k,s}` (d = 1).
    pub fn support(&self, k: i64, s: &SymbolTuple) -> Result<(f64, f64), MinorError> {
        if self.map.dim() != 1 {
            return Err(MinorError::UnsupportedDimension { dim: self.map.dim() });
        }
        let c = self.map.cylinder(&[k], s)?;
        Ok((c.corner[0], c.corner[0] + c.side))
    }

    /// Cell averages of `F_{k,s}` on `[k, k+1)` (d = 1).
    pub fn grid(&self, k: i64, s: &SymbolTuple, cells_per_unit: usize) -> Result<GridDensity, MinorError> {
        let support = self.support(k, s)?;
        let c = self.map.cylinder(&[k], s)?;
        // φ^{|s|} is affine on the cylinder: y = J + (x − a)/side or reversed
        let a = support.0 + 0.5 * c.side;
        let mid = {
            let mut y = vec![a];
            for _ in 0..s.len() {
                y = self.map.apply(&y);
            }
            y[0]
        };
        let edge = {
            let mut y = vec![support.0 + 0.25 * c.side];
            for _ in 0..s.len() {
                y = self.map.apply(&y);
            }
            y[0]
        };
        let scale = (mid - edge) / (0.25 * c.side);
        let vol = c.volume;
        Ok(GridDensity::from_fn(k, k + 1, cells_per_unit, Some(support), move |x| {
            f_star(&[mid + scale * (x - a)]) / vol
        }))
    }
}
