//! Reference maps used throughout the test-suite and the bundled configs.

use num::BigRational;

use super::{BernoulliMap, PartitionCell, PeriodicMap};

fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// `φ(x) = 2x` on `R`: `E_1 = [0,½) → Q_0`, `E_2 = [½,1) → Q_1`.
pub fn doubling() -> BernoulliMap {
    BernoulliMap::new(
        1,
        vec![
            PartitionCell::interval(0.0, 0.5, false, 0).with_exact_side(ratio(1, 2)),
            PartitionCell::interval(0.5, 0.5, false, 1).with_exact_side(ratio(1, 2)),
        ],
    )
    .expect("doubling map is valid")
}

/// `E_1 = [0,⅓) → Q_0` via `3x`, `E_2 = [⅓,1) → Q_1` via `(3/2)x + ½`.
pub fn asymmetric() -> BernoulliMap {
    BernoulliMap::new(
        1,
        vec![
            PartitionCell::interval(0.0, 1.0 / 3.0, false, 0).with_exact_side(ratio(1, 3)),
            PartitionCell::interval(1.0 / 3.0, 2.0 / 3.0, false, 1).with_exact_side(ratio(2, 3)),
        ],
    )
    .expect("asymmetric map is valid")
}

/// Doubling-type map whose branches both land in `Q_0`: no lattice
/// displacement at all, so the right side of the lower bound vanishes.
pub fn no_drift_doubling() -> BernoulliMap {
    BernoulliMap::new(
        1,
        vec![
            PartitionCell::interval(0.0, 0.5, false, 0).with_exact_side(ratio(1, 2)),
            PartitionCell::interval(0.5, 0.5, false, 0).with_exact_side(ratio(1, 2)),
        ],
    )
    .expect("no-drift doubling map is valid")
}

/// Tent-like map: the right branch is orientation reversing.
pub fn tent() -> BernoulliMap {
    BernoulliMap::new(
        1,
        vec![
            PartitionCell::interval(0.0, 0.5, false, 0).with_exact_side(ratio(1, 2)),
            PartitionCell::interval(0.5, 0.5, true, 1).with_exact_side(ratio(1, 2)),
        ],
    )
    .expect("tent map is valid")
}

/// `d = 2`: the four quarter cubes are expanded by 2 onto the four cubes with
/// corners in `{0,1}²`.
pub fn quadrant() -> BernoulliMap {
    let mut cells = Vec::new();
    for (cx, cy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        cells.push(
            PartitionCell::cube(vec![cx as f64 * 0.5, cy as f64 * 0.5], 0.5, vec![cx, cy])
                .with_exact_side(ratio(1, 2)),
        );
    }
    BernoulliMap::new(2, cells).expect("quadrant map is valid")
}

/// Shear flow map `φ(x, y) = (x + amplitude · sin(2πy), y)`.
///
/// Not a Bernoulli map; the vertical coordinate has no lattice displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearMap {
    pub amplitude: f64,
}

impl Default for ShearMap {
    fn default() -> Self {
        ShearMap { amplitude: 1.0 }
    }
}

impl PeriodicMap for ShearMap {
    fn dim(&self) -> usize {
        2
    }

    fn apply_unit(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let tau = std::f64::consts::TAU;
        out[0] = u[0] + self.amplitude * (tau * u[1]).sin();
        out[1] = u[1];
        1.0 + tau * self.amplitude.abs()
    }
}

/// Constant displacement `φ(x) = x + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationMap {
    pub shift: Vec<f64>,
}

impl PeriodicMap for TranslationMap {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn apply_unit(&self, u: &[f64], out: &mut [f64]) -> f64 {
        for ((o, x), s) in out.iter_mut().zip(u).zip(&self.shift) {
            *o = x + s;
        }
        1.0
    }

    fn affine_box_image(&self, corner: &[f64], side: f64) -> Option<(Vec<f64>, f64)> {
        Some((corner.iter().zip(&self.shift).map(|(c, s)| c + s).collect(), side))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_example() {
        let y = ShearMap::default().apply(&[0.0, 0.25]);
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert_eq!(y[1], 0.25);
    }

    #[test]
    fn quadrant_is_multiplication_by_two() {
        let m = quadrant();
        assert_eq!(m.apply(&[0.3, 0.7]), vec![0.6, 1.4]);
        assert_eq!(m.apply(&[1.75, -0.25]), vec![2.5, 0.5]);
    }
}
