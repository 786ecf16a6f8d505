//! Periodic chain specifications and their text form.
//!
//! ```toml
//! dim = 1
//! states = 1
//!
//! [[transitions]]
//! from = 0
//! to = 0
//! jump = [1]
//! prob = 0.5
//!
//! [[transitions]]
//! from = 0
//! to = 0
//! jump = [-1]
//! prob = 0.5
//!
//! [minorizer]
//! beta = 1.0
//! atoms = [{ jump = [1], prob = 0.5 }, { jump = [-1], prob = 0.5 }]
//! ```
//!
//! Minorizer atoms without a `state` apply to every state.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::map_core::PeriodicMap;
use crate::torus_transfer::{build_displacement_kernel, KernelOptions, LatticeChain, UlamGrid};

pub const ROW_SUM_TOL: f64 = 1e-14;
const DOMINATION_TOL: f64 = 1e-14;

/// `w(g, ·)` per state with weight `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Minorizer {
    pub beta: f64,
    pub atoms: Vec<BTreeMap<Vec<i64>, f64>>,
}

impl Minorizer {
    /// Same `w` for every state.
    pub fn constant(beta: f64, w: BTreeMap<Vec<i64>, f64>, states: usize) -> Self {
        Minorizer { beta, atoms: vec![w; states] }
    }

    /// Largest state-independent minorizer: `β w(j) = min_g Σ_{g'} q(g, g', j)`.
    pub fn intrinsic(chain: &LatticeChain) -> Option<Self> {
        let marginals = jump_marginals(chain);
        let mut common = marginals[0].clone();
        for m in &marginals[1..] {
            common = common
                .into_iter()
                .filter_map(|(j, p)| m.get(&j).map(|q| (j, p.min(*q))))
                .collect();
        }
        let beta: f64 = common.values().sum();
        if beta <= 0.0 {
            return None;
        }
        let w = common.into_iter().map(|(j, p)| (j, p / beta)).collect();
        Some(Minorizer::constant(beta, w, chain.states()))
    }

    pub fn is_constant(&self) -> bool {
        self.atoms.windows(2).all(|w| w[0] == w[1])
    }

    /// `Var_{w(g)}(v·j)`.
    pub fn variance(&self, g: usize, v: &[f64]) -> f64 {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (j, p) in &self.atoms[g] {
            let x: f64 = j.iter().zip(v).map(|(a, b)| *a as f64 * b).sum();
            m1 += p * x;
            m2 += p * x * x;
        }
        m2 - m1 * m1
    }
}

/// `Σ_{g'} q(g, g', j)` per state.
pub(crate) fn jump_marginals(chain: &LatticeChain) -> Vec<BTreeMap<Vec<i64>, f64>> {
    (0..chain.states())
        .map(|g| {
            let mut m = BTreeMap::new();
            for t in chain.row(g) {
                *m.entry(t.jump.to_vec()).or_insert(0.0) += t.prob;
            }
            m
        })
        .collect()
}

/// A displacement-indexed kernel `q(g, g', j)` on `S` torus states.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicChainSpec {
    pub chain: LatticeChain,
    pub minorizer: Option<Minorizer>,
    /// Kernel mass dropped outside the displacement window.
    pub omitted_mass: f64,
}

impl PeriodicChainSpec {
    pub fn new(chain: LatticeChain, minorizer: Option<Minorizer>) -> Result<Self, OracleError> {
        let spec = PeriodicChainSpec { chain, minorizer, omitted_mass: 0.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn states(&self) -> usize {
        self.chain.states()
    }

    fn validate(&self) -> Result<(), OracleError> {
        let c = &self.chain;
        if c.states() == 0 || c.dim() == 0 {
            return Err(OracleError::InvalidSpec("empty chain".into()));
        }
        for g in 0..c.states() {
            let mut sum = 0.0;
            for t in c.row(g) {
                if !(t.prob >= 0.0 && t.prob.is_finite()) {
                    return Err(OracleError::InvalidSpec(format!("state {g}: probability {}", t.prob)));
                }
                if t.to >= c.states() {
                    return Err(OracleError::InvalidSpec(format!("state {g}: target {} out of range", t.to)));
                }
                sum += t.prob;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(OracleError::InvalidSpec(format!("state {g}: row sums to {sum}")));
            }
        }
        if let Some(m) = &self.minorizer {
            check_minorizer(c, m)?;
        }
        Ok(())
    }

    /// `max_{g'} |Σ_g P(g, g') − 1|`; zero when Lebesgue measure is invariant.
    pub fn column_defect(&self) -> f64 {
        self.chain.torus_matrix().column_sums().iter().fold(0.0, |m, c| m.max((c - 1.0).abs()))
    }

    pub fn from_toml(text: &str) -> Result<Self, OracleError> {
        let file: SpecFile = toml::from_str(text).map_err(|e| OracleError::Parse(e.to_string()))?;
        file.build()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&SpecFile::from_spec(self)).expect("spec serialises")
    }
}

fn check_minorizer(chain: &LatticeChain, m: &Minorizer) -> Result<(), OracleError> {
    if !(m.beta > 0.0 && m.beta <= 1.0) {
        return Err(OracleError::InvalidMinorizer(format!("beta = {}", m.beta)));
    }
    if m.atoms.len() != chain.states() {
        return Err(OracleError::InvalidMinorizer(format!(
            "{} state distributions for {} states",
            m.atoms.len(),
            chain.states()
        )));
    }
    let marginals = jump_marginals(chain);
    for (g, (w, q)) in m.atoms.iter().zip(&marginals).enumerate() {
        let total: f64 = w.values().sum();
        if (total - 1.0).abs() > 1e-12 || w.values().any(|p| *p < 0.0) {
            return Err(OracleError::InvalidMinorizer(format!("state {g}: w sums to {total}")));
        }
        for (j, p) in w {
            if j.len() != chain.dim() {
                return Err(OracleError::InvalidMinorizer(format!("state {g}: jump {j:?} has wrong length")));
            }
            let have = q.get(j).copied().unwrap_or(0.0);
            if have < m.beta * p - DOMINATION_TOL {
                return Err(OracleError::InvalidMinorizer(format!(
                    "state {g}, jump {j:?}: kernel {have} < beta·w {}",
                    m.beta * p
                )));
            }
        }
    }
    Ok(())
}

/// Oracle spec from the Ulam kernel of `map` at noise `eps` on `G^d` cells.
/// The torus part must be doubly stochastic up to discretisation error.
pub fn build_spec_from_map<M: PeriodicMap + ?Sized>(map: &M, eps: f64, cells: usize) -> Result<PeriodicChainSpec, OracleError> {
    let grid = UlamGrid::new(map.dim(), cells);
    let kernel = build_displacement_kernel(map, eps, grid, KernelOptions::default())?;
    let mut spec = PeriodicChainSpec::new(kernel.chain, None)?;
    spec.omitted_mass = kernel.omitted_mass;
    let defect = spec.column_defect();
    assert!(defect <= 5.0 / cells as f64, "torus kernel far from doubly stochastic: {defect}");
    Ok(spec)
}

/// Doubly stochastic `S`-state chain in `d = 1` with jumps in `{−2, …, 2}`.
///
/// The torus part mixes the identity, the cyclic shift and one random
/// permutation, so it is irreducible and aperiodic; each edge carries a
/// random jump law on one to three atoms.
pub fn random_spec(seed: u64, states: usize) -> PeriodicChainSpec {
    assert!(states >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut perm: Vec<usize> = (0..states).collect();
        perm.shuffle(&mut rng);
        let perms: [Vec<usize>; 3] = [(0..states).collect(), (0..states).map(|g| (g + 1) % states).collect(), perm];
        let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let positions: Vec<f64> = (0..states).map(|_| rng.gen::<f64>()).collect();

        let mut rows = Vec::with_capacity(states);
        for g in 0..states {
            let mut row = Vec::new();
            for (sigma, w) in perms.iter().zip(&weights) {
                let atoms = rng.gen_range(1..=3);
                let mut jumps: Vec<i64> = (-2..=2).collect();
                jumps.shuffle(&mut rng);
                let split: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.1..1.0)).collect();
                let s: f64 = split.iter().sum();
                for (j, p) in jumps.iter().zip(&split) {
                    row.push((sigma[g], vec![*j], w * p / s));
                }
            }
            let sum: f64 = row.iter().map(|r| r.2).sum();
            for r in &mut row {
                r.2 /= sum;
            }
            rows.push(row);
        }
        let absorbing = rows.iter().enumerate().any(|(g, r)| r.iter().all(|t| t.0 == g) && r.len() == 1);
        if absorbing {
            continue;
        }
        let chain = LatticeChain::from_rows(1, positions, rows);
        if let Ok(spec) = PeriodicChainSpec::new(chain, None) {
            return spec;
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    dim: usize,
    states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<Vec<f64>>>,
    transitions: Vec<TransitionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minorizer: Option<MinorizerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionEntry {
    from: usize,
    to: usize,
    jump: Vec<i64>,
    prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MinorizerEntry {
    beta: f64,
    atoms: Vec<AtomEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<usize>,
    jump: Vec<i64>,
    prob: f64,
}

impl SpecFile {
    fn build(self) -> Result<PeriodicChainSpec, OracleError> {
        let (d, s) = (self.dim, self.states);
        if d == 0 || s == 0 {
            return Err(OracleError::InvalidSpec("dim and states must be positive".into()));
        }
        let positions = match self.positions {
            None => vec![0.0; s * d],
            Some(p) => {
                if p.len() != s || p.iter().any(|c| c.len() != d) {
                    return Err(OracleError::InvalidSpec("one position of length dim per state".into()));
                }
                p.into_iter().flatten().collect()
            }
        };
        let mut rows = vec![Vec::new(); s];
        for t in self.transitions {
            if t.from >= s || t.to >= s {
                return Err(OracleError::InvalidSpec(format!("transition {} -> {} out of range", t.from, t.to)));
            }
            if t.jump.len() != d {
                return Err(OracleError::InvalidSpec(format!("jump {:?} has wrong length", t.jump)));
            }
            rows[t.from].push((t.to, t.jump, t.prob));
        }
        let minorizer = match self.minorizer {
            None => None,
            Some(m) => {
                let mut atoms = vec![BTreeMap::new(); s];
                for a in m.atoms {
                    let targets: Vec<usize> = match a.state {
                        Some(g) if g >= s => {
                            return Err(OracleError::InvalidMinorizer(format!("state {g} out of range")))
                        }
                        Some(g) => vec![g],
                        None => (0..s).collect(),
                    };
                    for g in targets {
                        *atoms[g].entry(a.jump.clone()).or_insert(0.0) += a.prob;
                    }
                }
                Some(Minorizer { beta: m.beta, atoms })
            }
        };
        PeriodicChainSpec::new(LatticeChain::from_rows(d, positions, rows), minorizer)
    }

    fn from_spec(spec: &PeriodicChainSpec) -> Self {
        let c = &spec.chain;
        let (d, s) = (c.dim(), c.states());
        let positions = (0..s).map(|g| c.position(g).to_vec()).collect::<Vec<_>>();
        let transitions = (0..s)
            .flat_map(|g| c.row(g).map(move |t| TransitionEntry { from: g, to: t.to, jump: t.jump.to_vec(), prob: t.prob }))
            .collect();
        let minorizer = spec.minorizer.as_ref().map(|m| {
            let atoms = if m.is_constant() {
                m.atoms[0].iter().map(|(j, p)| AtomEntry { state: None, jump: j.clone(), prob: *p }).collect()
            } else {
                m.atoms
                    .iter()
                    .enumerate()
                    .flat_map(|(g, w)| w.iter().map(move |(j, p)| AtomEntry { state: Some(g), jump: j.clone(), prob: *p }))
                    .collect()
            };
            MinorizerEntry { beta: m.beta, atoms }
        });
        let positions = positions.iter().any(|p| p.iter().any(|x| *x != 0.0)).then_some(positions);
        SpecFile { dim: d, states: s, positions, transitions, minorizer }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::doubling;

    pub(crate) const COIN: &str = r#"
dim = 1
states = 1

[[transitions]]
from = 0
to = 0
jump = [1]
prob = 0.5

[[transitions]]
from = 0
to = 0
jump = [-1]
prob = 0.5

[minorizer]
beta = 1.0
atoms = [{ jump = [1], prob = 0.5 }, { jump = [-1], prob = 0.5 }]
"#;

    #[test]
    fn parses_coin() {
        let s = PeriodicChainSpec::from_toml(COIN).unwrap();
        assert_eq!(s.states(), 1);
        let m = s.minorizer.unwrap();
        assert_eq!(m.beta, 1.0);
        assert!((m.variance(0, &[1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_rows() {
        let extra = COIN.replace("states = 1", "states = 1\ncolour = 3");
        assert!(matches!(PeriodicChainSpec::from_toml(&extra), Err(OracleError::Parse(_))));
        let short = COIN.replacen("prob = 0.5", "prob = 0.4", 1);
        assert!(matches!(PeriodicChainSpec::from_toml(&short), Err(OracleError::InvalidSpec(_))));
    }

    #[test]
    fn rejects_undominated_minorizer() {
        let bad = COIN.replace("beta = 1.0", "beta = 1.0\n").replace("{ jump = [-1], prob = 0.5 }", "{ jump = [0], prob = 0.5 }");
        assert!(matches!(PeriodicChainSpec::from_toml(&bad), Err(OracleError::InvalidMinorizer(_))));
    }

    #[test]
    fn toml_round_trip() {
        let s = random_spec(3, 5);
        let back = PeriodicChainSpec::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back.chain, s.chain);
        let coin = PeriodicChainSpec::from_toml(COIN).unwrap();
        assert_eq!(PeriodicChainSpec::from_toml(&coin.to_toml()).unwrap(), coin);
    }

    #[test]
    fn random_specs_are_doubly_stochastic() {
        for seed in 0..20 {
            let s = random_spec(seed, 5);
            assert!(s.column_defect() < 1e-14);
            let (lo, hi) = s.chain.jump_window();
            assert!(lo[0] >= -2 && hi[0] <= 2);
        }
        assert_eq!(random_spec(9, 5), random_spec(9, 5));
    }

    #[test]
    fn intrinsic_minorizer_is_valid() {
        let s = random_spec(1, 5);
        if let Some(m) = Minorizer::intrinsic(&s.chain) {
            PeriodicChainSpec::new(s.chain.clone(), Some(m)).unwrap();
        }
        let coin = PeriodicChainSpec::from_toml(COIN).unwrap();
        let m = Minorizer::intrinsic(&coin.chain).unwrap();
        assert!((m.beta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_spec_matches_kernel() {
        let s = build_spec_from_map(&doubling(), 0.1, 256).unwrap();
        assert!(s.omitted_mass <= 1e-12);
        for r in s.chain.row_sums() {
            assert!((r - 1.0).abs() < 1e-10);
        }
        let k = build_displacement_kernel(&doubling(), 0.1, UlamGrid::new(1, 256), KernelOptions::default()).unwrap();
        assert_eq!(s.chain.torus_matrix(), k.chain.torus_matrix());
    }
}
