use std::fmt::Write as _;

use rayon::prelude::*;

use super::MinorError;
use crate::map_core::{BernoulliMap, PeriodicMap};
use crate::numerics::{gaussian_tail_radius, smoothed_interval_mass};

/// Default tail tolerance for Gaussian truncation and window trimming.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Largest number of grid cells a density may occupy.
pub const WINDOW_CELL_BUDGET: usize = 1 << 24;

/// Five-point Gauss–Legendre rule on `[0, 1]`.
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668_0,
    0.230_765_344_947_158_5,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_332_0,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

/// `∫_a^b f` by five-point Gauss–Legendre.
pub fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let w = b - a;
    GL_NODES.iter().zip(&GL_WEIGHTS).map(|(x, c)| c * f(a + w * x)).sum::<f64>() * w
}

/// Piecewise-constant density on `[lo, hi) ⊂ R` with `cells_per_unit`
/// cells per unit length; `values` are cell averages.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub lo: i64,
    pub hi: i64,
    pub cells_per_unit: usize,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn zeros(lo: i64, hi: i64, cells_per_unit: usize) -> Self {
        let n = (hi - lo) as usize * cells_per_unit;
        GridDensity { lo, hi, cells_per_unit, values: vec![0.0; n] }
    }

    /// Cell averages of `f` over `[lo, hi)`, restricted to `support` when
    /// given (cells are clipped to the interval before integrating).
    pub fn from_fn(lo: i64, hi: i64, cells_per_unit: usize, support: Option<(f64, f64)>, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let mut g = GridDensity::zeros(lo, hi, cells_per_unit);
        let h = g.width();
        g.values.par_iter_mut().enumerate().for_each(|(i, v)| {
            let a = lo as f64 + i as f64 * h;
            let (mut x0, mut x1) = (a, a + h);
            if let Some((s0, s1)) = support {
                x0 = x0.max(s0);
                x1 = x1.min(s1);
            }
            if x1 > x0 {
                *v = gauss_legendre(x0, x1, &f) / h;
            }
        });
        g
    }

    pub fn width(&self) -> f64 {
        1.0 / self.cells_per_unit as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_lo(&self, i: usize) -> f64 {
        self.lo as f64 + i as f64 * self.width()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.cell_lo(i) + 0.5 * self.width()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.width()
    }

    /// Index of the cell containing `x`, if inside the window.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let i = ((x - self.lo as f64) * self.cells_per_unit as f64).floor();
        (i >= 0.0 && (i as usize) < self.len()).then_some(i as usize)
    }

    /// Cells lying inside `[a, b)`, on the grid spacing, with `layer` cells
    /// dropped at both ends.
    pub fn cells_within(&self, a: f64, b: f64, layer: usize) -> std::ops::Range<usize> {
        let g = self.cells_per_unit as f64;
        let first = ((a - self.lo as f64) * g - 1e-9).ceil().max(0.0) as usize + layer;
        let last = (((b - self.lo as f64) * g + 1e-9).floor().max(0.0) as usize).min(self.len());
        first..last.saturating_sub(layer).max(first)
    }

    pub fn cube_mass(&self, k: i64) -> f64 {
        if k < self.lo || k >= self.hi {
            return 0.0;
        }
        let g = self.cells_per_unit;
        let start = (k - self.lo) as usize * g;
        self.values[start..start + g].iter().sum::<f64>() * self.width()
    }

    /// Value in the cube window `[lo', hi')`, padding with zeros.
    pub fn rewindow(&self, lo: i64, hi: i64) -> GridDensity {
        let mut out = GridDensity::zeros(lo, hi, self.cells_per_unit);
        let g = self.cells_per_unit as i64;
        for (i, v) in self.values.iter().enumerate() {
            let j = (self.lo - lo) * g + i as i64;
            if j >= 0 && (j as usize) < out.len() {
                out.values[j as usize] = *v;
            }
        }
        out
    }

    /// Drops end cubes whose mass is below `tol`; returns the dropped mass.
    pub fn trim(&mut self, tol: f64) -> f64 {
        let (mut lo, mut hi) = (self.lo, self.hi);
        let mut dropped = 0.0;
        while hi - lo > 1 && self.cube_mass(lo) + dropped < tol {
            dropped += self.cube_mass(lo);
            lo += 1;
        }
        while hi - lo > 1 && self.cube_mass(hi - 1) + dropped < tol {
            dropped += self.cube_mass(hi - 1);
            hi -= 1;
        }
        if (lo, hi) != (self.lo, self.hi) {
            *self = self.rewindow(lo, hi);
        }
        dropped
    }

    pub fn add_assign(&mut self, other: &GridDensity) {
        let lo = self.lo.min(other.lo);
        let hi = self.hi.max(other.hi);
        let mut a = self.rewindow(lo, hi);
        let b = other.rewindow(lo, hi);
        a.values.iter_mut().zip(&b.values).for_each(|(x, y)| *x += y);
        *self = a;
    }

    pub fn scaled(&self, c: f64) -> GridDensity {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `(x, value)` rows at cell centres.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(s, "{:.16e},{:.16e}", self.center(i), v).unwrap();
        }
        s
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

fn check_dim(map: &BernoulliMap) -> Result<(), MinorError> {
    if map.dim() != 1 {
        return Err(MinorError::UnsupportedDimension { dim: map.dim() });
    }
    Ok(())
}

/// `f ∘ φ^{-1} / |φ'|`: conservative pushforward of a piecewise-linear
/// (minmod-limited) reconstruction of `f`.
pub fn push_forward(map: &BernoulliMap, f: &GridDensity) -> Result<GridDensity, MinorError> {
    check_dim(map)?;
    let tmin = map.cells().iter().map(|c| c.target[0]).min().unwrap();
    let tmax = map.cells().iter().map(|c| c.target[0]).max().unwrap();
    let mut out = GridDensity::zeros(f.lo + tmin, f.hi + tmax, f.cells_per_unit);
    if out.len() > WINDOW_CELL_BUDGET {
        return Err(MinorError::WindowBudgetExceeded { cells: out.len() });
    }
    let h = f.width();
    let g = f.cells_per_unit as f64;
    let n = f.len();
    let mut mass = vec![0.0; out.len()];
    let mut y = [0.0];
    for i in 0..n {
        let v = f.values[i];
        let left = if i > 0 { f.values[i - 1] } else { 0.0 };
        let right = if i + 1 < n { f.values[i + 1] } else { 0.0 };
        let slope = minmod(v - left, right - v) / h;
        if v == 0.0 && slope == 0.0 {
            continue;
        }
        let x0 = f.cell_lo(i);
        let xc = x0 + 0.5 * h;
        let k = x0.floor();
        let (u0, u1) = (x0 - k, x0 - k + h);
        for c in map.cells() {
            let (p, q) = (u0.max(c.corner[0]), u1.min(c.corner[0] + c.side));
            if q <= p {
                continue;
            }
            c.forward(&[p], &mut y);
            let yp = y[0] + k;
            c.forward(&[q], &mut y);
            let yq = y[0] + k;
            let (ya, yb) = if yp <= yq { (yp, yq) } else { (yq, yp) };
            // walk target cells overlapping [ya, yb)
            let mut j = ((ya - out.lo as f64) * g).floor().max(0.0) as usize;
            while j < out.len() {
                let (ca, cb) = (out.cell_lo(j), out.cell_lo(j) + h);
                if ca >= yb {
                    break;
                }
                let (s, t) = (ca.max(ya), cb.min(yb));
                if t > s {
                    // preimage of [s, t) inside [p, q) + k
                    let xs = p + k + (s - ya) / (yb - ya) * (q - p);
                    let xt = p + k + (t - ya) / (yb - ya) * (q - p);
                    let (xa, xb) = if yp <= yq { (xs, xt) } else { (p + q + 2.0 * k - xt, p + q + 2.0 * k - xs) };
                    mass[j] += (xb - xa) * (v + slope * (0.5 * (xa + xb) - xc));
                }
                j += 1;
            }
        }
    }
    out.values = mass.into_iter().map(|m| m / h).collect();
    Ok(out)
}

/// Mass from a uniform source cell into the cell `m` places away.
fn cell_kernel(h: f64, eps: f64, tail_tol: f64) -> (usize, Vec<f64>) {
    let radius = ((gaussian_tail_radius(tail_tol) * eps) / h).ceil() as usize + 1;
    let k = (0..=2 * radius)
        .map(|j| {
            let m = j as f64 - radius as f64;
            smoothed_interval_mass(m * h, (m + 1.0) * h, 0.0, h, eps)
        })
        .collect();
    (radius, k)
}

/// Convolution with the centred Gaussian of standard deviation `eps`.
pub fn convolve_gaussian(f: &GridDensity, eps: f64, tail_tol: f64) -> Result<GridDensity, MinorError> {
    if eps == 0.0 {
        return Ok(f.clone());
    }
    let h = f.width();
    let (radius, kernel) = cell_kernel(h, eps, tail_tol);
    let pad = (radius as f64 * h).ceil() as i64;
    let src = f.rewindow(f.lo - pad, f.hi + pad);
    if src.len() > WINDOW_CELL_BUDGET {
        return Err(MinorError::WindowBudgetExceeded { cells: src.len() });
    }
    let n = src.len();
    let mut out = GridDensity::zeros(src.lo, src.hi, src.cells_per_unit);
    out.values.par_iter_mut().enumerate().for_each(|(i, o)| {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        let mut acc = 0.0;
        for j in lo..hi {
            // source j lands `i − j` cells away
            acc += src.values[j] * kernel[i + radius - j];
        }
        *o = acc;
    });
    Ok(out)
}

/// `T_{*,ε} f`: pushforward by `φ`, then Gaussian smoothing; end cubes
/// carrying less than `tail_tol` are trimmed.
pub fn push_density(map: &BernoulliMap, f: &GridDensity, eps: f64, tail_tol: f64) -> Result<GridDensity, MinorError> {
    if !(eps >= 0.0) {
        return Err(MinorError::EpsilonOutOfRange { eps });
    }
    let pushed = push_forward(map, f)?;
    let mut out = convolve_gaussian(&pushed, eps, tail_tol)?;
    out.trim(tail_tol);
    Ok(out)
}

/// `y ↦ Σ_j w^0(j) f(y + j)`: subtraction of an independent shift `I ~ w^0`.
pub fn defragment(map: &BernoulliMap, f: &GridDensity) -> GridDensity {
    let mut out = GridDensity::zeros(f.lo, f.lo + 1, f.cells_per_unit);
    for c in map.cells() {
        let j = c.target[0];
        let mut shifted = f.scaled(c.volume);
        shifted.lo -= j;
        shifted.hi -= j;
        out.add_assign(&shifted);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::{asymmetric, doubling, tent};

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let v = gauss_legendre(0.0, 2.0, |x| x.powi(9));
        assert!((v - 102.4).abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        let f = GridDensity::from_fn(0, 1, 256, None, |x| (std::f64::consts::PI * x).sin() * std::f64::consts::FRAC_PI_2);
        assert!((f.mass() - 1.0).abs() < 1e-10);
        for map in [doubling(), asymmetric(), tent()] {
            let g = push_density(&map, &f, 0.1, DEFAULT_TAIL_TOL).unwrap();
            assert!((g.mass() - 1.0).abs() < 1e-9, "{}", g.mass());
        }
    }

    #[test]
    fn uniform_on_an_aligned_branch_pushes_exactly() {
        let map = doubling();
        let f = GridDensity::from_fn(0, 1, 256, Some((0.5, 1.0)), |_| 2.0);
        let p = push_forward(&map, &f).unwrap();
        for i in p.cells_within(1.0, 2.0, 0) {
            assert!((p.values[i] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_on_a_branch_pushes_to_uniform() {
        let g = 512;
        let map = asymmetric();
        for c in map.cells() {
            let (a, b) = (c.corner[0], c.corner[0] + c.side);
            let f = GridDensity::from_fn(0, 1, g, Some((a, b)), |_| 1.0 / c.side);
            let p = push_density(&map, &f, 0.0, DEFAULT_TAIL_TOL).unwrap();
            let k = c.target[0];
            let cells = p.cells_within(k as f64, k as f64 + 1.0, 0);
            assert_eq!(cells.len(), g);
            let l1: f64 = cells.map(|i| (p.values[i] - 1.0).abs()).sum::<f64>() / g as f64;
            assert!(l1 <= 2.0 / g as f64, "{l1}");
            assert!((p.cube_mass(k) - 1.0).abs() <= 2.0 / g as f64);
        }
    }

    #[test]
    fn reversed_branch_keeps_linear_profiles() {
        let f = GridDensity::from_fn(0, 1, 64, Some((0.5, 1.0)), |x| 8.0 * (x - 0.5));
        let p = push_forward(&tent(), &f).unwrap();
        // φ(x) = 3 − 2x on [½, 1), so the image density is 2(2 − y) on (1, 2]
        for i in p.cells_within(1.0, 2.0, 2) {
            let y = p.center(i);
            assert!((p.values[i] - 2.0 * (2.0 - y)).abs() < 1e-9, "{y} {}", p.values[i]);
        }
    }

    #[test]
    fn gaussian_smoothing_of_a_sine() {
        // interior values of a periodic sine are damped by exp(−π²ε²·2)
        let f = GridDensity::from_fn(-3, 4, 512, None, |x| 1.0 + (std::f64::consts::TAU * x).sin());
        let eps = 0.05;
        let g = convolve_gaussian(&f, eps, DEFAULT_TAIL_TOL).unwrap();
        let damp = (-2.0 * std::f64::consts::PI.powi(2) * eps * eps).exp();
        let i = g.cell_of(0.25 + 1.0 / 1024.0).unwrap();
        let j = f.cell_of(0.25 + 1.0 / 1024.0).unwrap();
        assert!((g.values[i] - 1.0 - damp * (f.values[j] - 1.0)).abs() < 1e-4);
    }

    #[test]
    fn defragment_mixes_cubes() {
        let f = GridDensity::from_fn(1, 2, 16, None, |_| 1.0);
        let g = defragment(&doubling(), &f);
        assert!((g.cube_mass(0) - 0.5).abs() < 1e-15);
        assert!((g.cube_mass(1) - 0.5).abs() < 1e-15);
    }
}
