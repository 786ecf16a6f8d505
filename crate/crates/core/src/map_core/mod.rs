//! Piecewise-affine expanding Bernoulli maps on `R^d`.
//!
//! The unit cube `Q_0 = [0,1)^d` is tiled by axis-aligned cells `E_i`; each
//! cell is sent affinely onto a whole unit cube `Q_{σ_0(i)}` by
//! `φ_i(u) = O_i u / |E_i|^{1/d} + o_i`, and `φ` is extended to `R^d` by
//! `φ(n + u) = n + φ_i(u)`. All cells and cubes are half-open (lower-closed).

mod cylinder;
pub mod examples;
mod spec;
mod validate;

pub use cylinder::{CylinderSet, SymbolTuple, ThetaBar, ThetaMode, DEFAULT_NODE_BUDGET};
pub use spec::{ratio_to_f64, CellSpec, MapSpec, Scalar};
pub use validate::{AssumptionItem, ItemStatus, ValidationReport, BOUNDARY_MESH_POINTS};

use num::BigRational;
use thiserror::Error;

use crate::numerics::split_point;

/// Guard band used when a point falls between cells because of rounding.
pub const CELL_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("cells {first} and {second} overlap")]
    OverlappingCells { first: usize, second: usize },
    #[error("cell volumes sum to {total}, not 1")]
    VolumeDeficit { total: f64 },
    #[error("matrix of cell {cell} is not orthogonal")]
    NonOrthogonalMatrix { cell: usize },
    #[error("cell {cell} is not mapped onto its target cube")]
    TargetCubeMismatch { cell: usize },
    #[error("boundary point {point:?} of Q_0 has no preimage in an open cube")]
    BoundaryUncovered { point: Vec<f64> },
    #[error("cell {cell} does not lie inside the unit cube or has a non-positive side")]
    CellOutsideUnitCube { cell: usize },
    #[error("cell {cell} has fields of the wrong dimension")]
    DimensionMismatch { cell: usize },
    #[error("a map needs at least two cells, got {count}")]
    TooFewCells { count: usize },
    #[error("symbol {symbol} out of range for {cells} cells")]
    SymbolOutOfRange { symbol: usize, cells: usize },
    #[error("epsilon must be positive, got {eps}")]
    NonpositiveEpsilon { eps: f64 },
    #[error("epsilon must lie in (0, 1], got {eps}")]
    EpsilonOutOfRange { eps: f64 },
    #[error("symbol tree exceeded the budget of {budget} nodes")]
    TreeBudgetExceeded { budget: usize },
    #[error("invalid map: {0:?}")]
    Invalid(Vec<MapError>),
    #[error("parse error: {0}")]
    Parse(String),
}

/// A map of `R^d` with `Z^d`-periodic displacement, described by its action
/// on the unit cube.
pub trait PeriodicMap: Sync {
    fn dim(&self) -> usize;

    /// Writes `φ(u)` for `u ∈ [0,1)^d` and returns a bound on the local
    /// expansion factor (used to track precision of deterministic orbits).
    fn apply_unit(&self, u: &[f64], out: &mut [f64]) -> f64;

    /// When `φ` is affine with a scalar-times-signed-permutation linear part
    /// on the box `corner + [0, side)^d ⊂ [0,1)^d`, the image box as (lower
    /// corner, side).
    fn affine_box_image(&self, _corner: &[f64], _side: f64) -> Option<(Vec<f64>, f64)> {
        None
    }

    /// `φ(x)` for any `x ∈ R^d`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut cube = vec![0i64; d];
        let mut frac = vec![0.0; d];
        split_point(x, &mut cube, &mut frac);
        let mut out = vec![0.0; d];
        self.apply_unit(&frac, &mut out);
        for (o, c) in out.iter_mut().zip(&cube) {
            *o += *c as f64;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCell {
    pub index: usize,
    pub corner: Vec<f64>,
    pub side: f64,
    pub volume: f64,
    pub side_exact: Option<BigRational>,
    /// Row-major `d × d` orthogonal matrix.
    pub rotation: Vec<f64>,
    pub offset: Vec<f64>,
    pub target: Vec<i64>,
}

impl PartitionCell {
    pub fn new(corner: Vec<f64>, side: f64, rotation: Vec<f64>, offset: Vec<f64>, target: Vec<i64>) -> Self {
        let d = corner.len();
        PartitionCell {
            index: 0,
            volume: side.powi(d as i32),
            corner,
            side,
            side_exact: None,
            rotation,
            offset,
            target,
        }
    }

    pub fn with_exact_side(mut self, side: BigRational) -> Self {
        self.side_exact = Some(side);
        self
    }

    /// Orientation-preserving or reversing affine branch of a 1-d map sending
    /// `[lo, lo + side)` onto `[target, target + 1)`.
    pub fn interval(lo: f64, side: f64, reversed: bool, target: i64) -> Self {
        let (sign, offset) = if reversed {
            (-1.0, target as f64 + 1.0 + lo / side)
        } else {
            (1.0, target as f64 - lo / side)
        };
        PartitionCell::new(vec![lo], side, vec![sign], vec![offset], vec![target])
    }

    /// Axis-aligned cube branch with identity rotation.
    pub fn cube(corner: Vec<f64>, side: f64, target: Vec<i64>) -> Self {
        let d = corner.len();
        let offset = corner.iter().zip(&target).map(|(c, t)| *t as f64 - c / side).collect();
        let mut rotation = vec![0.0; d * d];
        for i in 0..d {
            rotation[i * d + i] = 1.0;
        }
        PartitionCell::new(corner, side, rotation, offset, target)
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn exact_volume(&self) -> Option<BigRational> {
        let s = self.side_exact.as_ref()?;
        let mut v = BigRational::from_integer(1.into());
        for _ in 0..self.dim() {
            v *= s;
        }
        Some(v)
    }

    /// Half-open membership `corner ≤ u < corner + side`.
    #[inline]
    pub fn contains(&self, u: &[f64]) -> bool {
        self.corner.iter().zip(u).all(|(c, x)| *x >= *c && *x < c + self.side)
    }

    #[inline]
    fn contains_guarded(&self, u: &[f64]) -> bool {
        self.corner
            .iter()
            .zip(u)
            .all(|(c, x)| *x >= c - CELL_GUARD && *x < c + self.side + CELL_GUARD)
    }

    /// `φ_i(u)`, using the continuous affine extension off the cell.
    #[inline]
    pub fn forward(&self, u: &[f64], out: &mut [f64]) {
        let d = u.len();
        let inv = 1.0 / self.side;
        for r in 0..d {
            let row = &self.rotation[r * d..(r + 1) * d];
            let mut acc = 0.0;
            for (a, x) in row.iter().zip(u) {
                acc += a * x;
            }
            out[r] = acc * inv + self.offset[r];
        }
    }

    /// Inverse branch `φ_i^{-1}(y) = side · Oᵀ (y − o)`.
    pub fn inverse(&self, y: &[f64], out: &mut [f64]) {
        let d = y.len();
        for c in 0..d {
            let mut acc = 0.0;
            for r in 0..d {
                acc += self.rotation[r * d + c] * (y[r] - self.offset[r]);
            }
            out[c] = acc * self.side;
        }
    }
}

/// A validated (or, through [`BernoulliMap::assemble`], raw) Bernoulli map.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliMap {
    dim: usize,
    cells: Vec<PartitionCell>,
}

impl BernoulliMap {
    /// Collects cells, sorting them by nondecreasing volume (stable), without
    /// checking any assumption.
    pub fn assemble(dim: usize, mut cells: Vec<PartitionCell>) -> Self {
        cells.sort_by(|a, b| a.volume.total_cmp(&b.volume));
        for (i, c) in cells.iter_mut().enumerate() {
            c.index = i;
        }
        BernoulliMap { dim, cells }
    }

    /// Collects and validates.
    pub fn new(dim: usize, cells: Vec<PartitionCell>) -> Result<Self, MapError> {
        BernoulliMap::assemble(dim, cells).validated()
    }

    pub fn validated(self) -> Result<Self, MapError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(MapError::Invalid(report.errors))
        }
    }

    pub fn cells(&self) -> &[PartitionCell] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn smallest_volume(&self) -> f64 {
        self.cells.first().map_or(1.0, |c| c.volume)
    }

    pub fn largest_volume(&self) -> f64 {
        self.cells.last().map_or(1.0, |c| c.volume)
    }

    /// `true` when every cell carries an exact rational side length.
    pub fn has_exact_volumes(&self) -> bool {
        self.cells.iter().all(|c| c.side_exact.is_some())
    }

    /// Index of the cell containing `u ∈ [0,1)^d`.
    ///
    /// Exact half-open comparison first; points lost between cells through
    /// rounding are snapped with a `1e-12` guard band to the lowest matching
    /// cell.
    #[inline]
    pub fn cell_index(&self, u: &[f64]) -> usize {
        if let Some(c) = self.cells.iter().find(|c| c.contains(u)) {
            return c.index;
        }
        let mut best: Option<&PartitionCell> = None;
        for c in self.cells.iter().filter(|c| c.contains_guarded(u)) {
            best = match best {
                Some(b) if lex_less(&b.corner, &c.corner) => Some(b),
                _ => Some(c),
            };
        }
        best.map_or(self.cells.len() - 1, |c| c.index)
    }

    /// `|det Dφ(x)| = 1/|E_i|` for the cell containing `frac(x)`.
    pub fn jacobian_det(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = x.iter().map(|v| crate::numerics::split_scalar(*v).1).collect();
        1.0 / self.cells[self.cell_index(&u)].volume
    }

    pub fn check_symbols(&self, symbols: &[usize]) -> Result<(), MapError> {
        match symbols.iter().find(|&&s| s >= self.cells.len()) {
            Some(&symbol) => Err(MapError::SymbolOutOfRange { symbol, cells: self.cells.len() }),
            None => Ok(()),
        }
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

impl PeriodicMap for BernoulliMap {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn apply_unit(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let cell = &self.cells[self.cell_index(u)];
        cell.forward(u, out);
        1.0 / cell.side
    }

    fn affine_box_image(&self, corner: &[f64], side: f64) -> Option<(Vec<f64>, f64)> {
        let d = self.dim;
        let cell = self.cells.iter().find(|c| c.contains(corner))?;
        let fits = corner.iter().zip(&cell.corner).all(|(x, c)| x + side <= c + cell.side);
        let permutation = cell.rotation.iter().all(|a| *a == 0.0 || a.abs() == 1.0);
        if !fits || !permutation {
            return None;
        }
        let mut lo = vec![0.0; d];
        cell.forward(corner, &mut lo);
        let width = side / cell.side;
        for r in 0..d {
            for c in 0..d {
                if cell.rotation[r * d + c] < 0.0 {
                    lo[r] -= width;
                }
            }
        }
        Some((lo, width))
    }
}
