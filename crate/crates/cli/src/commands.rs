//! Subcommand bodies. Each returns its CSV files and the list of failed
//! assertions; nothing here touches the filesystem.

use std::fmt::Write as _;

use rayon::prelude::*;
use resdiff_core::diffusivity::{residual_sweep, variance_rate_mc, SweepConfig};
use resdiff_core::lattice_oracle::{
    build_spec_from_map, exact_variance_rate_dual, kv_identity_defect, minorization_bound_check, random_spec,
    PeriodicChainSpec, Stopping,
};
use resdiff_core::map_core::{BernoulliMap, PeriodicMap, SymbolTuple};
use resdiff_core::minor_check::{verify_bump_chain, verify_doeblin, DoeblinStage};
use resdiff_core::process::{simulate_ensemble, EnsembleSpec, InitialLaw, NoiseSource, NoiseStream};
use resdiff_core::torus_transfer::{
    build_displacement_kernel, corrector_solve, default_mode, kv_rate, mixing_time, CorrectorMode, KernelOptions,
    UlamGrid, DEFAULT_SERIES_CAP,
};

use crate::config::{ConfigIssue, Inputs, Resolved};

/// Largest finite-n KV identity defect accepted by `oracle`.
pub const KV_DEFECT_MAX: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Simulate,
    Mixing,
    Kv,
    Sweep,
    Minorize,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Mixing => "mixing",
            Command::Kv => "kv",
            Command::Sweep => "sweep",
            Command::Minorize => "minorize",
            Command::Oracle => "oracle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Command::Validate,
            Command::Simulate,
            Command::Mixing,
            Command::Kv,
            Command::Sweep,
            Command::Minorize,
            Command::Oracle,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub failures: Vec<String>,
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<ConfigIssue>),
    Compute(String),
}

fn missing(section: &str) -> RunError {
    RunError::Config(vec![ConfigIssue::new(section, "section missing from the configuration")])
}

fn compute<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Compute(e.to_string())
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".to_string(), f)
}

fn map_of(r: &Resolved) -> Result<&BernoulliMap, RunError> {
    r.map.as_ref().ok_or_else(|| RunError::Config(vec![ConfigIssue::new("map", "required")]))
}

pub fn run(cmd: Command, r: &Resolved, seed: u64, inputs: &mut dyn Inputs) -> Result<Outcome, RunError> {
    match cmd {
        Command::Validate => validate(r),
        Command::Simulate => simulate(r, seed),
        Command::Mixing => mixing(r),
        Command::Kv => kv(r, seed),
        Command::Sweep => sweep(r, seed),
        Command::Minorize => minorize(r, seed),
        Command::Oracle => oracle(r, seed, inputs),
    }
}

fn validate(r: &Resolved) -> Result<Outcome, RunError> {
    let mut s = String::from("item,status\n");
    if let Some(map) = &r.map {
        for (item, status) in map.validate().items {
            writeln!(s, "{item:?},{status:?}").unwrap();
        }
    }
    Ok(Outcome { files: vec![("validate.csv".into(), s)], failures: Vec::new() })
}

fn simulate(r: &Resolved, seed: u64) -> Result<Outcome, RunError> {
    let c = r.config.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    let map = map_of(r)?;
    let d = map.dim();
    let mut spec = EnsembleSpec::new(c.eps, c.steps, c.trajectories, seed);
    if let Some(x) = &c.start {
        spec.initial = InitialLaw::Delta(x.clone());
    }
    spec.checkpoints = c.checkpoints.clone();
    spec.directions = c.directions.clone().unwrap_or_else(|| {
        (0..d).map(|k| (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect()
    });
    let report = simulate_ensemble(map, &spec);
    let mut s = String::from("time,count,direction,variance,std_error\n");
    for snap in &report.snapshots {
        for (i, dv) in snap.directional.iter().enumerate() {
            writeln!(s, "{},{},{},{},{}", snap.time, snap.count, i, f(dv.variance), f(dv.std_error)).unwrap();
        }
    }
    Ok(Outcome { files: vec![("simulate.csv".into(), s)], failures: Vec::new() })
}

/// Least-squares line `y = a + b x` and its `R²`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (my - slope * mx, slope, r2)
}

fn mixing(r: &Resolved) -> Result<Outcome, RunError> {
    let c = r.config.mixing.as_ref().ok_or_else(|| missing("mixing"))?;
    let map = map_of(r)?;
    let grid = UlamGrid::new(map.dim(), c.grid);
    let times: Vec<Result<Option<usize>, RunError>> = c
        .eps
        .par_iter()
        .map(|&eps| {
            let k = build_displacement_kernel(map, eps, grid, KernelOptions::default()).map_err(compute)?;
            let p = k.chain.torus_matrix();
            Ok(mixing_time(&p, c.threshold, c.cap, default_mode(p.n)).ok())
        })
        .collect();
    let mut failures = Vec::new();
    let mut s = String::from("eps,abs_log_eps,t_mix,ratio\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (eps, t) in c.eps.iter().zip(times) {
        let l = eps.ln().abs();
        match t? {
            Some(t) => {
                writeln!(s, "{},{},{},{}", f(*eps), f(l), t, f(t as f64 / l)).unwrap();
                xs.push(l);
                ys.push(t as f64);
            }
            None => {
                writeln!(s, "{},{},NaN,NaN", f(*eps), f(l)).unwrap();
                failures.push(format!("eps={eps}: no mixing within {} steps", c.cap));
            }
        }
    }
    let mut fit = String::from("intercept,slope,r2\n");
    if xs.len() >= 2 {
        let (a, b, r2) = linear_fit(&xs, &ys);
        writeln!(fit, "{},{},{}", f(a), f(b), f(r2)).unwrap();
        if r2 < c.r2_min {
            failures.push(format!("R^2 {r2} below {}", c.r2_min));
        }
    }
    Ok(Outcome { files: vec![("mixing.csv".into(), s), ("mixing_fit.csv".into(), fit)], failures })
}

fn kv(r: &Resolved, seed: u64) -> Result<Outcome, RunError> {
    let c = r.config.kv.as_ref().ok_or_else(|| missing("kv"))?;
    let map = map_of(r)?;
    let grid = UlamGrid::new(map.dim(), c.grid);
    let rows: Vec<Result<String, RunError>> = c
        .eps
        .par_iter()
        .map(|&eps| {
            let k = build_displacement_kernel(map, eps, grid, KernelOptions::default()).map_err(compute)?;
            let lin = corrector_solve(&k.chain, CorrectorMode::Linear).map_err(compute)?;
            let ser = corrector_solve(&k.chain, CorrectorMode::Series { tol: c.series_tol, cap: DEFAULT_SERIES_CAP })
                .map_err(compute)?;
            let a = kv_rate(&k.chain, &lin, &c.v).map_err(compute)?;
            let b = kv_rate(&k.chain, &ser, &c.v).map_err(compute)?;
            let diff = lin.chi.iter().zip(&ser.chi).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            let (mc, se) = if c.trajectories > 0 {
                let steps = c.steps_per_log * (eps.ln().abs().ceil() as usize).max(1);
                let e = variance_rate_mc(map, eps, &c.v, steps, c.trajectories, seed).map_err(compute)?;
                (Some(e.rate), Some(e.std_error))
            } else {
                (None, None)
            };
            let z = mc.zip(se).map(|(m, s)| (a - m) / s);
            Ok(format!(
                "{},{},{},{},{},{},{},{}",
                f(eps),
                f(a),
                f(b),
                f(diff),
                f(lin.residual),
                opt(mc),
                opt(se),
                opt(z)
            ))
        })
        .collect();
    let mut s = String::from("eps,kv_rate,kv_rate_series,corrector_diff,residual,mc_rate,mc_se,z\n");
    let mut failures = Vec::new();
    for (eps, row) in c.eps.iter().zip(rows) {
        let row = row?;
        let cols: Vec<f64> = row.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect();
        if cols[4] > c.residual_max {
            failures.push(format!("eps={eps}: corrector residual {}", cols[4]));
        }
        if cols[3] > 10.0 * c.series_tol {
            failures.push(format!("eps={eps}: series and linear correctors differ by {}", cols[3]));
        }
        if cols[7].abs() > c.z_max {
            failures.push(format!("eps={eps}: kv_rate {} vs MC {} (z = {})", cols[1], cols[5], cols[7]));
        }
        s.push_str(&row);
        s.push('\n');
    }
    Ok(Outcome { files: vec![("kv.csv".into(), s)], failures })
}

fn sweep(r: &Resolved, seed: u64) -> Result<Outcome, RunError> {
    let c = r.config.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let map = map_of(r)?;
    let mut cfg = SweepConfig::new(c.eps.clone(), c.v.clone(), c.trajectories, seed);
    cfg.steps_per_log = c.steps_per_log;
    cfg.grid = c.grid;
    cfg.c_floor = c.c_floor;
    let report = residual_sweep(map, &cfg).map_err(compute)?;
    Ok(Outcome { files: vec![("sweep.csv".into(), report.to_csv())], failures: report.violations() })
}

fn stage_name(s: DoeblinStage) -> &'static str {
    match s {
        DoeblinStage::Defrag => "defrag",
        DoeblinStage::OneStep => "one_step",
        DoeblinStage::TwoStep => "two_step",
    }
}

/// Start points for the Doeblin checks, drawn from the run seed.
pub fn doeblin_starts(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = NoiseStream::new(seed, u64::MAX);
    (0..n).map(|_| rng.uniform()).collect()
}

fn minorize(r: &Resolved, seed: u64) -> Result<Outcome, RunError> {
    let c = r.config.minorize.as_ref().ok_or_else(|| missing("minorize"))?;
    let map = map_of(r)?;
    let starts = doeblin_starts(seed, c.starts);
    let s_tuple = SymbolTuple(c.s.clone());
    let mut summary = String::from("eps,a_fit,beta_emp,beta_theory,defrag,one_step_min,one_step_max,two_step_min\n");
    let mut bump = String::from("eps,n,lambda,one_step_ratio,cumulative_ratio\n");
    let mut doeblin = String::from("eps,stage,x,theta,target_cube,constant\n");
    let mut failures = Vec::new();
    for &eps in &c.eps {
        let chain = verify_bump_chain(map, c.k, &s_tuple, eps, c.grid).map_err(compute)?;
        for st in &chain.steps {
            writeln!(bump, "{},{},{},{},{}", f(eps), st.n, f(st.lambda), f(st.one_step_ratio), f(st.cumulative_ratio)).unwrap();
        }
        let mut jobs: Vec<(DoeblinStage, f64)> = vec![(DoeblinStage::Defrag, starts[0])];
        jobs.extend(starts.iter().map(|&x| (DoeblinStage::OneStep, x)));
        jobs.extend(starts.iter().map(|&x| (DoeblinStage::TwoStep, x)));
        let reports = jobs
            .par_iter()
            .map(|&(stage, x)| verify_doeblin(map, x, eps, stage, c.grid))
            .collect::<Result<Vec<_>, _>>()
            .map_err(compute)?;
        let mut defrag = f64::NAN;
        let (mut one_min, mut one_max, mut two_min) = (f64::INFINITY, 0.0_f64, f64::INFINITY);
        for rep in &reports {
            writeln!(
                doeblin,
                "{},{},{},{},{},{}",
                f(eps),
                stage_name(rep.stage),
                f(rep.x),
                rep.theta.map_or_else(String::new, |t| t.to_string()),
                rep.target_cube.map_or_else(String::new, |t| t.to_string()),
                f(rep.constant)
            )
            .unwrap();
            match rep.stage {
                DoeblinStage::Defrag => defrag = rep.constant,
                DoeblinStage::OneStep => {
                    one_min = one_min.min(rep.constant);
                    one_max = one_max.max(rep.constant);
                }
                DoeblinStage::TwoStep => two_min = two_min.min(rep.constant),
            }
        }
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            f(eps),
            f(chain.a_fit),
            f(chain.beta_emp),
            f(chain.beta_theory),
            f(defrag),
            f(one_min),
            f(one_max),
            f(two_min)
        )
        .unwrap();
        if !chain.passes(c.beta_slack) {
            failures.push(format!("eps={eps}: beta_emp {} below {} - {}", chain.beta_emp, chain.beta_theory, c.beta_slack));
        }
        if !(defrag > 0.0 && one_min > 0.0 && two_min > 0.0) {
            failures.push(format!("eps={eps}: nonpositive Doeblin constant"));
        }
        if let Some(m) = c.spread_max {
            if one_max > m * one_min {
                failures.push(format!("eps={eps}: one-step constants spread {} > {m}", one_max / one_min));
            }
        }
    }
    Ok(Outcome {
        files: vec![
            ("minorize.csv".into(), summary),
            ("minorize_bump.csv".into(), bump),
            ("minorize_doeblin.csv".into(), doeblin),
        ],
        failures,
    })
}

fn oracle(r: &Resolved, seed: u64, inputs: &mut dyn Inputs) -> Result<Outcome, RunError> {
    let c = r.config.oracle.as_ref().ok_or_else(|| missing("oracle"))?;
    let mut specs: Vec<(String, PeriodicChainSpec)> = Vec::new();
    let mut issues = Vec::new();
    for path in &c.specs {
        match inputs.read(path).map_err(|e| e.to_string()).and_then(|t| PeriodicChainSpec::from_toml(&t).map_err(|e| e.to_string())) {
            Ok(s) => specs.push((path.clone(), s)),
            Err(e) => issues.push(ConfigIssue::new("oracle.specs", format!("{path}: {e}"))),
        }
    }
    if !issues.is_empty() {
        return Err(RunError::Config(issues));
    }
    for i in 0..c.random {
        let s = seed.wrapping_add(i as u64);
        specs.push((format!("random:{s}"), random_spec(s, 5)));
    }
    if let Some(eps) = c.map_eps {
        let map = map_of(r)?;
        specs.push((format!("map:eps={eps}:G={}", c.map_grid), build_spec_from_map(map, eps, c.map_grid).map_err(compute)?));
    }
    let rows: Vec<(String, Vec<String>)> = specs
        .par_iter()
        .map(|(name, spec)| oracle_row(name, spec, c.v.as_slice(), c.kv_steps, c.stopping))
        .collect();
    let mut s = String::from(
        "spec,states,rate_a,rate_b,abs_diff,kv_defect,bound,bound_rate,bound_pass,stopped_bound,stopped_rate,stopped_pass\n",
    );
    let mut failures = Vec::new();
    for (row, fails) in rows {
        s.push_str(&row);
        s.push('\n');
        failures.extend(fails);
    }
    Ok(Outcome { files: vec![("oracle.csv".into(), s)], failures })
}

fn oracle_row(name: &str, spec: &PeriodicChainSpec, v: &[f64], kv_steps: usize, stopping: Option<usize>) -> (String, Vec<String>) {
    let mut fails = Vec::new();
    let dual = match exact_variance_rate_dual(spec, v) {
        Ok(d) => d,
        Err(e) => {
            fails.push(format!("{name}: {e}"));
            return (format!("{name},{},NaN,NaN,NaN,NaN,NaN,NaN,,NaN,NaN,", spec.states()), fails);
        }
    };
    if !dual.agrees() {
        fails.push(format!("{name}: |rate_A - rate_B| = {}", dual.difference));
    }
    let defect = kv_identity_defect(spec, v, kv_steps).unwrap_or(f64::NAN);
    if !(defect <= KV_DEFECT_MAX) {
        fails.push(format!("{name}: finite-n KV defect {defect}"));
    }
    let mut bound_cols = "NaN,NaN,".to_string();
    let mut stopped_cols = "NaN,NaN,".to_string();
    if spec.minorizer.is_some() {
        match minorization_bound_check(spec, v, &Stopping::None) {
            Ok(b) => {
                bound_cols = format!("{},{},{}", f(b.bound), f(b.rate), b.pass);
                if !b.pass {
                    fails.push(format!("{name}: rate {} below bound {}", b.rate, b.bound));
                }
            }
            Err(e) => fails.push(format!("{name}: {e}")),
        }
        if let Some(k) = stopping {
            match minorization_bound_check(spec, v, &Stopping::Every(k)) {
                Ok(b) => {
                    stopped_cols = format!("{},{},{}", f(b.bound), f(b.rate), b.pass);
                    if !b.pass {
                        fails.push(format!("{name}: stopped rate {} below bound {}", b.rate, b.bound));
                    }
                }
                Err(e) => fails.push(format!("{name}: {e}")),
            }
        }
    }
    (
        format!(
            "{name},{},{},{},{},{},{bound_cols},{stopped_cols}",
            spec.states(),
            f(dual.rate_a),
            f(dual.rate_b),
            f(dual.difference),
            f(defect)
        ),
        fails,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn command_names_round_trip() {
        for c in [Command::Validate, Command::Sweep, Command::Oracle] {
            assert_eq!(Command::from_name(c.name()), Some(c));
        }
        assert_eq!(Command::from_name("replay"), None);
    }

    #[test]
    fn starts_are_reproducible() {
        assert_eq!(doeblin_starts(7, 5), doeblin_starts(7, 5));
        assert!(doeblin_starts(7, 25).iter().all(|x| (0.0..1.0).contains(x)));
    }
}
