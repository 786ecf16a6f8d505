//! Cylinder sets `C_{k,s}`, the expansion time `θ^ε` and its mean.
//!
//! Symbols are 0-based cell indices into [`BernoulliMap::cells`], so the
//! doubling tuple written `(2,1)` with 1-based labels is `[1, 0]` here.

use num::{BigRational, One, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BernoulliMap, MapError, PeriodicMap};
use crate::numerics::split_point;

/// Default cap on the number of symbol-tree nodes visited by exact
/// enumerations.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// A finite word over the cell alphabet; the empty word is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct SymbolTuple(pub Vec<usize>);

impl SymbolTuple {
    pub fn empty() -> Self {
        SymbolTuple(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    /// Left shift: drops the first symbol.
    pub fn shift(&self) -> SymbolTuple {
        SymbolTuple(self.0.iter().skip(1).copied().collect())
    }
}

impl From<Vec<usize>> for SymbolTuple {
    fn from(v: Vec<usize>) -> Self {
        SymbolTuple(v)
    }
}

/// The axis-aligned cube `C_{k,s}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderSet {
    pub cube: Vec<i64>,
    pub symbols: SymbolTuple,
    pub corner: Vec<f64>,
    /// `ℓ_s`.
    pub side: f64,
    /// `|C_{k,s}| = ℓ_s^d`, accumulated as the product of the cell volumes.
    pub volume: f64,
}

impl CylinderSet {
    pub fn dim(&self) -> usize {
        self.cube.len()
    }

    /// `λ_s = 1/ℓ_s`.
    pub fn expansion(&self) -> f64 {
        1.0 / self.side
    }

    /// Half-open membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.corner.iter().zip(x).all(|(c, v)| *v >= *c && *v < c + self.side)
    }
}

/// Affine map `y ↦ A y + b` sending `Q_0` onto `C_{0,s}`.
#[derive(Debug, Clone)]
struct InverseBranch {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl InverseBranch {
    fn identity(dim: usize) -> Self {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = 1.0;
        }
        InverseBranch { dim, a, b: vec![0.0; dim] }
    }

    /// `B ∘ ψ_t` with `ψ_t(y) = φ_t^{-1}(σ_0(t) + y)`.
    fn then(&self, map: &BernoulliMap, t: usize) -> Self {
        let d = self.dim;
        let cell = &map.cells[t];
        // ψ_t(y) = h Oᵀ y + h Oᵀ (σ_0 − o)
        let mut m = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                m[r * d + c] = cell.side * cell.rotation[c * d + r];
            }
        }
        let shift: Vec<f64> = (0..d).map(|j| cell.target[j] as f64 - cell.offset[j]).collect();
        let mut a = vec![0.0; d * d];
        let mut b = self.b.clone();
        for r in 0..d {
            for c in 0..d {
                a[r * d + c] = (0..d).map(|k| self.a[r * d + k] * m[k * d + c]).sum();
            }
            let mut ms = 0.0;
            for k in 0..d {
                let mk: f64 = (0..d).map(|c| m[k * d + c] * shift[c]).sum();
                ms += self.a[r * d + k] * mk;
            }
            b[r] += ms;
        }
        InverseBranch { dim: d, a, b }
    }

    /// Lower corner of the image of `[0,1]^d`.
    fn corner(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|r| self.b[r] + (0..d).map(|c| self.a[r * d + c].min(0.0)).sum::<f64>())
            .collect()
    }
}

/// How [`BernoulliMap::theta_bar`] evaluates `θ̄^ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaMode {
    Exact { budget: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// `θ̄^ε = ∫_{Q_0} θ^ε` with an error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBar {
    pub value: f64,
    /// Zero in exact mode; one standard error in Monte Carlo mode.
    pub std_error: f64,
    /// Rational value when every cell carries an exact side.
    pub exact: Option<BigRational>,
}

/// A leaf of the `S_ε` tree over `Q_0`.
#[derive(Debug, Clone)]
pub(crate) struct Leaf<'a> {
    pub symbols: &'a [usize],
    pub volume: f64,
}

impl BernoulliMap {
    fn check_eps_unit(eps: f64) -> Result<(), MapError> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(MapError::NonpositiveEpsilon { eps });
        }
        if eps > 1.0 {
            return Err(MapError::EpsilonOutOfRange { eps });
        }
        Ok(())
    }

    /// `ε^d`, the volume threshold matching `ℓ ≤ ε`.
    fn volume_threshold(&self, eps: f64) -> f64 {
        eps.powi(self.dim as i32)
    }

    /// Geometry of `C_{k,s}` by composing inverse branches.
    pub fn cylinder(&self, k: &[i64], s: &SymbolTuple) -> Result<CylinderSet, MapError> {
        self.check_symbols(s.symbols())?;
        if k.len() != self.dim {
            return Err(MapError::DimensionMismatch { cell: 0 });
        }
        let mut branch = InverseBranch::identity(self.dim);
        let mut volume = 1.0;
        let mut side = 1.0;
        for &t in s.symbols() {
            branch = branch.then(self, t);
            volume *= self.cells[t].volume;
            side *= self.cells[t].side;
        }
        let corner = branch.corner().iter().zip(k).map(|(c, kk)| c + *kk as f64).collect();
        Ok(CylinderSet { cube: k.to_vec(), symbols: s.clone(), corner, side, volume })
    }

    /// `σ(k,s) = (k + σ_0(s_0), σ̃ s)` for nonempty `s`.
    pub fn cylinder_shift(&self, k: &[i64], s: &SymbolTuple) -> Option<(Vec<i64>, SymbolTuple)> {
        let first = *s.symbols().first()?;
        let cube = k.iter().zip(&self.cells[first].target).map(|(a, b)| a + b).collect();
        Some((cube, s.shift()))
    }

    /// `J(k,s) = k + Σ_j σ_0(s_j)`: the cube covered by `φ^{|s|}(C_{k,s})`.
    pub fn cylinder_landing(&self, k: &[i64], s: &[usize]) -> Vec<i64> {
        let mut out = k.to_vec();
        for &t in s {
            for (o, v) in out.iter_mut().zip(&self.cells[t].target) {
                *o += v;
            }
        }
        out
    }

    /// `|C_{k,s}|` as a rational, when every cell side is exact.
    pub fn exact_tuple_volume(&self, s: &[usize]) -> Option<BigRational> {
        let mut v = BigRational::one();
        for &t in s {
            v *= self.cells[t].exact_volume()?;
        }
        Some(v)
    }

    /// The unique `(k, s) ∈ S_ε` with `x ∈ C_{k,s}`.
    pub fn locate_cylinder(&self, x: &[f64], eps: f64) -> Result<(Vec<i64>, SymbolTuple), MapError> {
        Self::check_eps_unit(eps)?;
        let d = self.dim;
        let threshold = self.volume_threshold(eps);
        let mut cube = vec![0i64; d];
        let mut frac = vec![0.0; d];
        split_point(x, &mut cube, &mut frac);
        let k = cube.clone();
        let mut next = vec![0.0; d];
        let mut symbols = Vec::new();
        let mut volume = 1.0;
        while volume > threshold {
            let i = self.cell_index(&frac);
            symbols.push(i);
            volume *= self.cells[i].volume;
            self.cells[i].forward(&frac, &mut next);
            split_point(&next, &mut cube, &mut frac);
        }
        Ok((k, SymbolTuple(symbols)))
    }

    /// `θ^ε(x)`: the least `m` with `Π_{k=1}^m |det Dφ(X^0_k(x))| ≥ ε^{-d}`.
    ///
    /// The product is accumulated as a product of cell volumes compared with
    /// `ε^d`, in the same order as the cylinder enumeration, so that
    /// `θ^ε(x) = |s|` for the cylinder `(k, s) ∈ S_ε` containing `φ(x)`.
    pub fn theta_eps(&self, x: &[f64], eps: f64) -> Result<usize, MapError> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(MapError::NonpositiveEpsilon { eps });
        }
        if eps >= 1.0 {
            return Ok(0);
        }
        let y = self.apply(x);
        Ok(self.locate_cylinder(&y, eps)?.1.len())
    }

    /// Depth-first walk of the `S_ε` tree over `Q_0` in lexicographic order.
    pub(crate) fn visit_s_eps<F>(&self, eps: f64, budget: usize, mut visit: F) -> Result<(), MapError>
    where
        F: FnMut(Leaf<'_>),
    {
        Self::check_eps_unit(eps)?;
        let threshold = self.volume_threshold(eps);
        let m = self.cells.len();
        let mut nodes = 1usize;
        if 1.0 <= threshold {
            visit(Leaf { symbols: &[], volume: 1.0 });
            return Ok(());
        }
        // stack of (symbols, volume) with the next child to try at each depth
        let mut word: Vec<usize> = vec![0];
        let mut volumes: Vec<f64> = vec![1.0];
        loop {
            let depth = word.len();
            let t = word[depth - 1];
            let vol = volumes[depth - 1] * self.cells[t].volume;
            nodes += 1;
            if nodes > budget {
                return Err(MapError::TreeBudgetExceeded { budget });
            }
            if vol <= threshold {
                visit(Leaf { symbols: &word, volume: vol });
                // advance to the next sibling, popping exhausted levels
                loop {
                    let last = word.len() - 1;
                    if word[last] + 1 < m {
                        word[last] += 1;
                        break;
                    }
                    word.pop();
                    volumes.pop();
                    if word.is_empty() {
                        return Ok(());
                    }
                }
            } else {
                volumes.push(vol);
                word.push(0);
            }
        }
    }

    /// `S_ε` restricted to `Q_0`, in lexicographic tuple order.
    pub fn enumerate_s_eps(&self, eps: f64, budget: usize) -> Result<Vec<CylinderSet>, MapError> {
        let mut words = Vec::new();
        self.visit_s_eps(eps, budget, |leaf| words.push(leaf.symbols.to_vec()))?;
        let origin = vec![0i64; self.dim];
        words.into_iter().map(|w| self.cylinder(&origin, &SymbolTuple(w))).collect()
    }

    /// `θ̄^ε = ∫_{Q_0} θ^ε`.
    ///
    /// Exact mode sums `|t| · |C_{0,t}|` over `S_ε`; θ^ε equals `|t|` on
    /// `φ^{-1}` of each such cylinder and `φ` preserves Lebesgue measure on
    /// the torus.
    pub fn theta_bar(&self, eps: f64, mode: ThetaMode) -> Result<ThetaBar, MapError> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(MapError::NonpositiveEpsilon { eps });
        }
        if eps >= 1.0 {
            return Ok(ThetaBar { value: 0.0, std_error: 0.0, exact: Some(BigRational::zero()) });
        }
        match mode {
            ThetaMode::Exact { budget } => {
                let exact_ok = self.has_exact_volumes();
                let mut sum = 0.0;
                let mut exact = BigRational::zero();
                self.visit_s_eps(eps, budget, |leaf| {
                    let n = leaf.symbols.len();
                    sum += n as f64 * leaf.volume;
                    if exact_ok {
                        let v = self.exact_tuple_volume(leaf.symbols).expect("exact volumes");
                        exact += v * BigRational::from_integer(n.into());
                    }
                })?;
                if exact_ok {
                    Ok(ThetaBar { value: super::ratio_to_f64(&exact), std_error: 0.0, exact: Some(exact) })
                } else {
                    Ok(ThetaBar { value: sum, std_error: 0.0, exact: None })
                }
            }
            ThetaMode::MonteCarlo { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut x = vec![0.0; self.dim];
                let (mut s1, mut s2) = (0.0, 0.0);
                for _ in 0..samples {
                    for xi in x.iter_mut() {
                        *xi = rng.gen::<f64>();
                    }
                    let t = self.theta_eps(&x, eps)? as f64;
                    s1 += t;
                    s2 += t * t;
                }
                let n = samples.max(1) as f64;
                let mean = s1 / n;
                let var = if samples > 1 { (s2 - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
                Ok(ThetaBar { value: mean, std_error: (var / n).sqrt(), exact: None })
            }
        }
    }

    /// Lower and upper bounds `d ln ε/ln|E_1| ≤ θ^ε < d ln ε/ln|E_M| + 1`.
    pub fn theta_bounds(&self, eps: f64) -> (f64, f64) {
        let d = self.dim as f64;
        let le = eps.ln();
        (d * le / self.smallest_volume().ln(), d * le / self.largest_volume().ln() + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::examples::*;
    use super::*;
    use proptest::prelude::*;

    fn tuple(v: &[usize]) -> SymbolTuple {
        SymbolTuple(v.to_vec())
    }

    #[test]
    fn doubling_cylinders() {
        let m = doubling();
        let c = m.cylinder(&[0], &tuple(&[0])).unwrap();
        assert_eq!((c.corner[0], c.side), (0.0, 0.5));
        let c = m.cylinder(&[0], &tuple(&[1, 0])).unwrap();
        assert_eq!((c.corner[0], c.side), (0.5, 0.25));
        assert_eq!(m.cylinder_landing(&[0], &[1, 0]), vec![1]);
        let c = m.cylinder(&[3], &SymbolTuple::empty()).unwrap();
        assert_eq!((c.corner[0], c.side), (3.0, 1.0));
        assert!(matches!(m.cylinder(&[0], &tuple(&[2])), Err(MapError::SymbolOutOfRange { .. })));
    }

    #[test]
    fn reversed_branch_cylinder() {
        let m = tent();
        // right branch reversed: x ∈ [½,1) ↦ 3 − 2x ∈ (1,2]; points landing in
        // [1, 1½) come from (¾, 1)
        let c = m.cylinder(&[0], &tuple(&[1, 0])).unwrap();
        assert!((c.corner[0] - 0.75).abs() < 1e-15 && c.side == 0.25);
    }

    #[test]
    fn theta_examples() {
        assert_eq!(doubling().theta_eps(&[0.3], 0.1).unwrap(), 4);
        assert_eq!(asymmetric().theta_eps(&[0.0], 0.1).unwrap(), 3);
        assert_eq!(asymmetric().theta_eps(&[0.7], 1.0).unwrap(), 0);
        assert!(matches!(doubling().theta_eps(&[0.3], 0.0), Err(MapError::NonpositiveEpsilon { .. })));
    }

    #[test]
    fn locate_and_enumerate() {
        let m = doubling();
        let (k, s) = m.locate_cylinder(&[0.6], 0.3).unwrap();
        assert_eq!((k, s), (vec![0], tuple(&[1, 0])));
        let cells = m.enumerate_s_eps(0.3, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.side == 0.25));
        assert_eq!(m.enumerate_s_eps(0.6, DEFAULT_NODE_BUDGET).unwrap().len(), 2);
        assert_eq!(m.enumerate_s_eps(1.0, DEFAULT_NODE_BUDGET).unwrap().len(), 1);
    }

    #[test]
    fn enumeration_partitions_q0() {
        for m in [doubling(), asymmetric(), tent(), quadrant()] {
            let cells = m.enumerate_s_eps(0.05, DEFAULT_NODE_BUDGET).unwrap();
            let total: f64 = cells.iter().map(|c| c.volume).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let words: Vec<_> = cells.iter().map(|c| c.symbols.clone()).collect();
            let mut sorted = words.clone();
            sorted.sort();
            assert_eq!(words, sorted);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let err = asymmetric().enumerate_s_eps(1e-6, 1000).unwrap_err();
        assert_eq!(err, MapError::TreeBudgetExceeded { budget: 1000 });
    }

    #[test]
    fn theta_bar_doubling_and_asymmetric() {
        let t = doubling().theta_bar(0.1, ThetaMode::Exact { budget: DEFAULT_NODE_BUDGET }).unwrap();
        assert_eq!(t.exact, Some(BigRational::from_integer(4.into())));
        let m = asymmetric();
        let t = m.theta_bar(0.1, ThetaMode::Exact { budget: DEFAULT_NODE_BUDGET }).unwrap();
        let (lo, hi) = m.theta_bounds(0.1);
        assert!(t.value >= lo && t.value < hi, "{} not in [{lo}, {hi})", t.value);
        let mc = m.theta_bar(0.1, ThetaMode::MonteCarlo { samples: 200_000, seed: 7 }).unwrap();
        assert!((mc.value - t.value).abs() < 4.0 * mc.std_error + 1e-12);
        let one = m.theta_bar(1.0, ThetaMode::Exact { budget: 10 }).unwrap();
        assert_eq!(one.value, 0.0);
    }

    #[test]
    fn cylinder_recursion_is_exact() {
        // ℓ_{σ(k,s)} = ℓ_s / h_{s_0} over all words of length ≤ 6
        for m in [doubling(), asymmetric()] {
            let n = m.num_cells();
            for len in 1..=6u32 {
                for code in 0..n.pow(len) {
                    let mut c = code;
                    let w: Vec<usize> = (0..len)
                        .map(|_| {
                            let t = c % n;
                            c /= n;
                            t
                        })
                        .collect();
                    let s = SymbolTuple(w.clone());
                    let (k2, tail) = m.cylinder_shift(&[0], &s).unwrap();
                    let full = m.exact_tuple_volume(&w).unwrap();
                    let rest = m.exact_tuple_volume(tail.symbols()).unwrap();
                    assert_eq!(rest, full / m.cells()[w[0]].exact_volume().unwrap());
                    assert_eq!(k2, vec![m.cells()[w[0]].target[0]]);
                }
            }
        }
    }

    #[test]
    fn image_of_cylinder_is_shifted_cylinder() {
        let m = asymmetric();
        let s = tuple(&[1, 0, 1]);
        let c = m.cylinder(&[2], &s).unwrap();
        let (k2, tail) = m.cylinder_shift(&[2], &s).unwrap();
        let img = m.cylinder(&k2, &tail).unwrap();
        let lo = m.apply(&c.corner);
        assert!((lo[0] - img.corner[0]).abs() < 1e-12);
        assert!((c.side / m.cells()[1].side - img.side).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn theta_matches_located_cylinder(x in -20.0f64..20.0, eps in 0.01f64..0.9) {
            for m in [doubling(), asymmetric(), tent()] {
                let t = m.theta_eps(&[x], eps).unwrap();
                let (k, s) = m.locate_cylinder(&m.apply(&[x]), eps).unwrap();
                prop_assert_eq!(t, s.len());
                let c = m.cylinder(&k, &s).unwrap();
                let y = m.apply(&[x]);
                prop_assert!(y[0] >= c.corner[0] - 1e-9 && y[0] < c.corner[0] + c.side + 1e-9);
                let (lo, hi) = m.theta_bounds(eps);
                prop_assert!(t as f64 >= lo - 1e-9 && (t as f64) < hi);
            }
        }

        #[test]
        fn periodic_displacement(num in -(50i64 << 20)..(50i64 << 20), k in -100i64..100) {
            // dyadic points keep x + k exact
            let x = num as f64 / (1u64 << 20) as f64;
            for m in [doubling(), asymmetric(), tent()] {
                prop_assert_eq!(m.apply(&[x + k as f64])[0] - k as f64, m.apply(&[x])[0]);
            }
        }

        #[test]
        fn jacobian_within_bounds(x in -10.0f64..10.0) {
            for m in [doubling(), asymmetric()] {
                let j = m.jacobian_det(&[x]);
                prop_assert!(j >= 1.0 / m.largest_volume() && j <= 1.0 / m.smallest_volume());
            }
        }
    }
}
