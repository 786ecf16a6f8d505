//! Experiment configuration: parsing, validation and input resolution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use resdiff_core::map_core::{BernoulliMap, MapSpec};
use resdiff_core::minor_check::DOEBLIN_MAX_EPS;
use resdiff_core::torus_transfer::{DEFAULT_MIXING_CAP, DEFAULT_SERIES_TOL, MIXING_THRESHOLD};
use serde::{Deserialize, Serialize};

/// One problem found in a configuration or input file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigIssue { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Map file, relative to the configuration file.
    pub map: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the working directory.
    pub out: Option<String>,
    pub simulate: Option<SimulateSection>,
    pub mixing: Option<MixingSection>,
    pub kv: Option<KvSection>,
    pub sweep: Option<SweepSection>,
    pub minorize: Option<MinorizeSection>,
    pub oracle: Option<OracleSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub eps: f64,
    pub steps: usize,
    pub trajectories: usize,
    /// Directions for `var(v·X_n)`; the coordinate axes when absent.
    pub directions: Option<Vec<Vec<f64>>>,
    /// Fixed start; uniform on the unit cube when absent.
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub checkpoints: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub eps: Vec<f64>,
    pub grid: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_r2")]
    pub r2_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KvSection {
    pub eps: Vec<f64>,
    pub grid: usize,
    pub v: Vec<f64>,
    /// Monte Carlo comparison; skipped when zero.
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default = "default_steps_per_log")]
    pub steps_per_log: usize,
    #[serde(default = "default_series_tol")]
    pub series_tol: f64,
    #[serde(default = "default_residual_max")]
    pub residual_max: f64,
    #[serde(default = "default_z_max")]
    pub z_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub v: Vec<f64>,
    pub trajectories: usize,
    #[serde(default = "default_steps_per_log")]
    pub steps_per_log: usize,
    pub grid: Option<usize>,
    #[serde(default = "default_c_floor")]
    pub c_floor: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinorizeSection {
    pub eps: Vec<f64>,
    #[serde(default = "default_minor_grid")]
    pub grid: usize,
    #[serde(default)]
    pub k: i64,
    /// Symbol tuple of the bump chain, 0-based.
    pub s: Vec<usize>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_beta_slack")]
    pub beta_slack: f64,
    /// Largest allowed max/min of the one-step constants across starts.
    pub spread_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Chain spec files, relative to the configuration file.
    #[serde(default)]
    pub specs: Vec<String>,
    /// Additional generated 5-state specs, seeded from the run seed.
    #[serde(default)]
    pub random: usize,
    #[serde(default = "default_oracle_v")]
    pub v: Vec<f64>,
    #[serde(default = "default_kv_steps")]
    pub kv_steps: usize,
    /// Adds the Ulam spec of the configured map at this noise level.
    pub map_eps: Option<f64>,
    #[serde(default = "default_map_grid")]
    pub map_grid: usize,
    /// Every-`k` stopping schedule for specs with a minorizer.
    pub stopping: Option<usize>,
}

fn default_threshold() -> f64 {
    MIXING_THRESHOLD
}
fn default_cap() -> usize {
    DEFAULT_MIXING_CAP
}
fn default_r2() -> f64 {
    0.9
}
fn default_steps_per_log() -> usize {
    200
}
fn default_series_tol() -> f64 {
    DEFAULT_SERIES_TOL
}
fn default_residual_max() -> f64 {
    1e-8
}
fn default_z_max() -> f64 {
    3.0
}
fn default_c_floor() -> f64 {
    0.2
}
fn default_minor_grid() -> usize {
    2048
}
fn default_starts() -> usize {
    25
}
fn default_beta_slack() -> f64 {
    0.05
}
fn default_oracle_v() -> Vec<f64> {
    vec![1.0]
}
fn default_kv_steps() -> usize {
    100
}
fn default_map_grid() -> usize {
    128
}

/// Reads auxiliary files named in a configuration and records their text.
pub trait Inputs {
    fn read(&mut self, name: &str) -> Result<String, String>;
    fn recorded(&self) -> BTreeMap<String, String>;
}

/// Files relative to a base directory.
pub struct DiskInputs {
    base: PathBuf,
    seen: BTreeMap<String, String>,
}

impl DiskInputs {
    pub fn new(base: &Path) -> Self {
        DiskInputs { base: base.to_path_buf(), seen: BTreeMap::new() }
    }
}

impl Inputs for DiskInputs {
    fn read(&mut self, name: &str) -> Result<String, String> {
        let text = std::fs::read_to_string(self.base.join(name)).map_err(|e| format!("{name}: {e}"))?;
        self.seen.insert(name.to_string(), text.clone());
        Ok(text)
    }

    fn recorded(&self) -> BTreeMap<String, String> {
        self.seen.clone()
    }
}

/// Files captured in a manifest.
pub struct StoredInputs(pub BTreeMap<String, String>);

impl Inputs for StoredInputs {
    fn read(&mut self, name: &str) -> Result<String, String> {
        self.0.get(name).cloned().ok_or_else(|| format!("{name}: not recorded in the manifest"))
    }

    fn recorded(&self) -> BTreeMap<String, String> {
        self.0.clone()
    }
}

/// A validated configuration with its map loaded.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub map: Option<BernoulliMap>,
}

pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    toml::from_str(text).map_err(|e| vec![ConfigIssue::new("config", e.message().to_string())])
}

/// Parses the map file, reporting every structural problem.
pub fn load_map(text: &str) -> Result<BernoulliMap, Vec<ConfigIssue>> {
    let spec = MapSpec::from_toml(text).map_err(|e| vec![ConfigIssue::new("map", e.to_string())])?;
    let map = spec.assemble().map_err(|e| vec![ConfigIssue::new("map", e.to_string())])?;
    let report = map.validate();
    if report.is_valid() {
        Ok(map)
    } else {
        Err(report.errors.iter().map(|e| ConfigIssue::new("map", e.to_string())).collect())
    }
}

pub fn resolve(text: &str, inputs: &mut dyn Inputs) -> Result<Resolved, Vec<ConfigIssue>> {
    let config = parse(text)?;
    let mut issues = check(&config);
    let map = match &config.map {
        None => None,
        Some(path) => match inputs.read(path) {
            Err(e) => {
                issues.push(ConfigIssue::new("map", e));
                None
            }
            Ok(t) => match load_map(&t) {
                Ok(m) => Some(m),
                Err(e) => {
                    issues.extend(e);
                    None
                }
            },
        },
    };
    if let Some(o) = &config.oracle {
        for path in &o.specs {
            if let Err(e) = inputs.read(path) {
                issues.push(ConfigIssue::new("oracle.specs", e));
            }
        }
    }
    if let Some(m) = &map {
        issues.extend(check_against_map(&config, m));
    }
    if issues.is_empty() {
        Ok(Resolved { config, map })
    } else {
        Err(issues)
    }
}

fn eps_list(field: &str, eps: &[f64], hi: f64, issues: &mut Vec<ConfigIssue>) {
    if eps.is_empty() {
        issues.push(ConfigIssue::new(field, "at least one noise level is required"));
    }
    for e in eps {
        if !(*e > 0.0 && *e < hi) {
            issues.push(ConfigIssue::new(field, format!("noise level {e} outside (0, {hi})")));
        }
    }
}

fn positive(field: &str, n: usize, issues: &mut Vec<ConfigIssue>) {
    if n == 0 {
        issues.push(ConfigIssue::new(field, "must be positive"));
    }
}

fn direction(field: &str, v: &[f64], issues: &mut Vec<ConfigIssue>) {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) || v.iter().all(|x| *x == 0.0) {
        issues.push(ConfigIssue::new(field, "direction must be finite and nonzero"));
    }
}

/// Range checks that need no input files.
pub fn check(c: &ExperimentConfig) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    if let Some(s) = &c.simulate {
        if !(s.eps >= 0.0 && s.eps.is_finite()) {
            issues.push(ConfigIssue::new("simulate.eps", "must be finite and non-negative"));
        }
        positive("simulate.steps", s.steps, &mut issues);
        positive("simulate.trajectories", s.trajectories, &mut issues);
        if s.checkpoints.iter().any(|t| *t > s.steps) {
            issues.push(ConfigIssue::new("simulate.checkpoints", "checkpoint beyond the horizon"));
        }
        for v in s.directions.iter().flatten() {
            direction("simulate.directions", v, &mut issues);
        }
    }
    if let Some(m) = &c.mixing {
        eps_list("mixing.eps", &m.eps, 1.0, &mut issues);
        if m.grid < 8 {
            issues.push(ConfigIssue::new("mixing.grid", "at least 8 cells per axis"));
        }
        if !(m.threshold > 0.0 && m.threshold < 2.0) {
            issues.push(ConfigIssue::new("mixing.threshold", "must lie in (0, 2)"));
        }
        positive("mixing.cap", m.cap, &mut issues);
        if m.eps.len() < 2 {
            issues.push(ConfigIssue::new("mixing.eps", "the fit needs at least two noise levels"));
        }
    }
    if let Some(k) = &c.kv {
        eps_list("kv.eps", &k.eps, 1.0, &mut issues);
        if k.grid < 8 {
            issues.push(ConfigIssue::new("kv.grid", "at least 8 cells per axis"));
        }
        direction("kv.v", &k.v, &mut issues);
        positive("kv.steps_per_log", k.steps_per_log, &mut issues);
        if !(k.series_tol > 0.0) {
            issues.push(ConfigIssue::new("kv.series_tol", "must be positive"));
        }
    }
    if let Some(s) = &c.sweep {
        eps_list("sweep.eps", &s.eps, 1.0, &mut issues);
        if s.eps.windows(2).any(|w| w[0] <= w[1]) {
            issues.push(ConfigIssue::new("sweep.eps", "noise levels must be strictly decreasing"));
        }
        direction("sweep.v", &s.v, &mut issues);
        positive("sweep.trajectories", s.trajectories, &mut issues);
        positive("sweep.steps_per_log", s.steps_per_log, &mut issues);
        if matches!(s.grid, Some(g) if g < 8) {
            issues.push(ConfigIssue::new("sweep.grid", "at least 8 cells per axis"));
        }
    }
    if let Some(m) = &c.minorize {
        eps_list("minorize.eps", &m.eps, DOEBLIN_MAX_EPS + f64::EPSILON, &mut issues);
        if m.grid < 64 {
            issues.push(ConfigIssue::new("minorize.grid", "at least 64 cells per unit"));
        }
        if m.s.is_empty() {
            issues.push(ConfigIssue::new("minorize.s", "symbol tuple must be nonempty"));
        }
        positive("minorize.starts", m.starts, &mut issues);
    }
    if let Some(o) = &c.oracle {
        direction("oracle.v", &o.v, &mut issues);
        if o.specs.is_empty() && o.random == 0 && o.map_eps.is_none() {
            issues.push(ConfigIssue::new("oracle", "no specs, random specs or map spec requested"));
        }
        if matches!(o.map_eps, Some(e) if !(e > 0.0 && e < 1.0)) {
            issues.push(ConfigIssue::new("oracle.map_eps", "noise level outside (0, 1)"));
        }
        if o.map_eps.is_some() && c.map.is_none() {
            issues.push(ConfigIssue::new("oracle.map_eps", "requires a map"));
        }
        if matches!(o.stopping, Some(0)) {
            issues.push(ConfigIssue::new("oracle.stopping", "must be positive"));
        }
    }
    let needs_map = c.simulate.is_some() || c.mixing.is_some() || c.kv.is_some() || c.sweep.is_some() || c.minorize.is_some();
    if needs_map && c.map.is_none() {
        issues.push(ConfigIssue::new("map", "required by the configured sections"));
    }
    issues
}

fn check_against_map(c: &ExperimentConfig, map: &BernoulliMap) -> Vec<ConfigIssue> {
    use resdiff_core::map_core::PeriodicMap;
    let d = map.dim();
    let mut issues = Vec::new();
    let dim = |field: &str, v: &[f64], issues: &mut Vec<ConfigIssue>| {
        if v.len() != d {
            issues.push(ConfigIssue::new(field, format!("expected {d} components, got {}", v.len())));
        }
    };
    if let Some(s) = &c.simulate {
        for v in s.directions.iter().flatten() {
            dim("simulate.directions", v, &mut issues);
        }
        if let Some(x) = &s.start {
            dim("simulate.start", x, &mut issues);
        }
    }
    if let Some(k) = &c.kv {
        dim("kv.v", &k.v, &mut issues);
    }
    if let Some(s) = &c.sweep {
        dim("sweep.v", &s.v, &mut issues);
    }
    if let Some(o) = &c.oracle {
        if o.map_eps.is_some() {
            dim("oracle.v", &o.v, &mut issues);
        }
    }
    if d > 2 && (c.mixing.is_some() || c.kv.is_some()) {
        issues.push(ConfigIssue::new("map", "grid kernels need dimension 1 or 2"));
    }
    if d != 1 && c.minorize.is_some() {
        issues.push(ConfigIssue::new("minorize", "minorization checks need dimension 1"));
    }
    if let Some(m) = &c.minorize {
        if m.s.iter().any(|i| *i >= map.num_cells()) {
            issues.push(ConfigIssue::new("minorize.s", "symbol out of range"));
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse("seed = 1\ncolour = 2\n").unwrap_err();
        assert_eq!(e[0].field, "config");
        assert!(parse("[sweep]\neps = [0.1]\nv = [1.0]\ntrajectories = 5\nfoo = 1\n").is_err());
    }

    #[test]
    fn collects_every_issue() {
        let c = parse("[sweep]\neps = [0.1, 0.2]\nv = [0.0]\ntrajectories = 0\n").unwrap();
        let fields: Vec<String> = check(&c).into_iter().map(|i| i.field).collect();
        for f in ["sweep.eps", "sweep.v", "sweep.trajectories", "map"] {
            assert!(fields.iter().any(|x| x == f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn malformed_map_lists_errors() {
        let text = "dimension = 1\n[[cells]]\ncorner = [0.0]\nside = 0.7\northogonal = [[1.0]]\noffset = [0.0]\ntarget_cube = [0]\n\
                    [[cells]]\ncorner = [0.5]\nside = 0.5\northogonal = [[1.0]]\noffset = [0.0]\ntarget_cube = [1]\n";
        let e = load_map(text).unwrap_err();
        assert!(!e.is_empty());
        assert!(e.iter().all(|i| i.field == "map"));
    }

    #[test]
    fn stored_inputs_replay() {
        let mut s = StoredInputs([("m.toml".to_string(), "x".to_string())].into_iter().collect());
        assert_eq!(s.read("m.toml").unwrap(), "x");
        assert!(s.read("other").is_err());
    }
}
