//! `resdiff`: configuration-driven experiments on noisy Bernoulli maps.
//!
//! Every run writes its CSV files and a `<command>.manifest.json` sidecar
//! into the output directory. Exit status: 0 success, 1 configuration or
//! input error, 2 failed assertion. A JSON status line is printed on stdout.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use commands::{Command, Outcome, RunError};
use config::{ConfigIssue, DiskInputs, Inputs, StoredInputs};

#[derive(Parser)]
#[command(name = "resdiff", version, about = "Residual diffusivity experiments for noisy expanding Bernoulli maps")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: the configured one, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Check the configuration and the map assumptions.
    Validate(RunArgs),
    /// Ensemble moments of `X_n`.
    Simulate(RunArgs),
    /// Ulam mixing times against `|ln ε|`.
    Mixing(RunArgs),
    /// Corrector and Kipnis–Varadhan rates, optionally against Monte Carlo.
    Kv(RunArgs),
    /// Residual-diffusivity sweep over noise levels.
    Sweep(RunArgs),
    /// Bump chain and Doeblin constants.
    Minorize(RunArgs),
    /// Exact finite-state oracle checks.
    Oracle(RunArgs),
    /// Re-run a manifest and compare output digests.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write the re-run outputs here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct OutputDigest {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    seed: u64,
    config_sha256: String,
    config: String,
    /// Map and spec files read by the run, keyed as named in the config.
    inputs: BTreeMap<String, String>,
    outputs: Vec<OutputDigest>,
    status: String,
    failures: Vec<String>,
}

fn sha256(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn emit(status: &str, body: serde_json::Value) {
    let mut v = serde_json::json!({ "status": status });
    if let (Some(m), serde_json::Value::Object(b)) = (v.as_object_mut(), body) {
        m.extend(b);
    }
    println!("{v}");
}

fn config_error(issues: &[ConfigIssue]) -> ExitCode {
    emit("config_error", serde_json::json!({ "errors": issues }));
    ExitCode::from(1)
}

fn set_threads(n: Option<usize>) {
    if let Some(n) = n {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(cmd: Command, text: &str, seed: Option<u64>, inputs: &mut dyn Inputs) -> Result<(Outcome, u64), RunError> {
    let resolved = config::resolve(text, inputs).map_err(RunError::Config)?;
    let seed = seed.unwrap_or(resolved.config.seed);
    let outcome = commands::run(cmd, &resolved, seed, inputs)?;
    Ok((outcome, seed))
}

fn write_outputs(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn run_command(cmd: Command, args: RunArgs) -> ExitCode {
    set_threads(args.threads);
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return config_error(&[ConfigIssue::new("config", format!("{}: {e}", args.config.display()))]),
    };
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut inputs = DiskInputs::new(&base);
    let (outcome, seed) = match execute(cmd, &text, args.seed, &mut inputs) {
        Ok(x) => x,
        Err(RunError::Config(issues)) => return config_error(&issues),
        Err(RunError::Compute(msg)) => return config_error(&[ConfigIssue::new("run", msg)]),
    };
    let out = args
        .out
        .or_else(|| config::parse(&text).ok().and_then(|c| c.out).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let status = if outcome.failures.is_empty() { "ok" } else { "assertion_failed" };
    let manifest = Manifest {
        tool: "resdiff".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        seed,
        config_sha256: sha256(&text),
        config: text,
        inputs: inputs.recorded(),
        outputs: outcome.files.iter().map(|(n, b)| OutputDigest { file: n.clone(), sha256: sha256(b) }).collect(),
        status: status.into(),
        failures: outcome.failures.clone(),
    };
    let mut files = outcome.files;
    let manifest_name = format!("{}.manifest.json", cmd.name());
    files.push((manifest_name.clone(), serde_json::to_string_pretty(&manifest).unwrap() + "\n"));
    if let Err(e) = write_outputs(&out, &files) {
        return config_error(&[ConfigIssue::new("out", format!("{}: {e}", out.display()))]);
    }
    let written: Vec<String> = files.iter().map(|(n, _)| out.join(n).display().to_string()).collect();
    emit(status, serde_json::json!({ "outputs": written, "failures": outcome.failures }));
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn replay(path: &Path, threads: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    set_threads(threads);
    let manifest: Manifest = match std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(m) => m,
        Err(e) => return config_error(&[ConfigIssue::new("manifest", format!("{}: {e}", path.display()))]),
    };
    let Some(cmd) = Command::from_name(&manifest.command) else {
        return config_error(&[ConfigIssue::new("manifest", format!("unknown command {}", manifest.command))]);
    };
    if sha256(&manifest.config) != manifest.config_sha256 {
        return config_error(&[ConfigIssue::new("manifest", "config digest mismatch")]);
    }
    let mut inputs = StoredInputs(manifest.inputs.clone());
    let (outcome, _) = match execute(cmd, &manifest.config, Some(manifest.seed), &mut inputs) {
        Ok(x) => x,
        Err(RunError::Config(issues)) => return config_error(&issues),
        Err(RunError::Compute(msg)) => return config_error(&[ConfigIssue::new("run", msg)]),
    };
    if let Some(dir) = out {
        if let Err(e) = write_outputs(&dir, &outcome.files) {
            return config_error(&[ConfigIssue::new("out", format!("{}: {e}", dir.display()))]);
        }
    }
    let fresh: BTreeMap<&str, String> = outcome.files.iter().map(|(n, b)| (n.as_str(), sha256(b))).collect();
    let mismatched: Vec<&str> = manifest
        .outputs
        .iter()
        .filter(|o| fresh.get(o.file.as_str()) != Some(&o.sha256))
        .map(|o| o.file.as_str())
        .collect();
    if mismatched.is_empty() && fresh.len() == manifest.outputs.len() {
        emit("ok", serde_json::json!({ "reproduced": manifest.outputs.len() }));
        ExitCode::SUCCESS
    } else {
        emit("assertion_failed", serde_json::json!({ "mismatched": mismatched }));
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Sub::Validate(a) => run_command(Command::Validate, a),
        Sub::Simulate(a) => run_command(Command::Simulate, a),
        Sub::Mixing(a) => run_command(Command::Mixing, a),
        Sub::Kv(a) => run_command(Command::Kv, a),
        Sub::Sweep(a) => run_command(Command::Sweep, a),
        Sub::Minorize(a) => run_command(Command::Minorize, a),
        Sub::Oracle(a) => run_command(Command::Oracle, a),
        Sub::Replay { manifest, threads, out } => replay(&manifest, threads, out),
    }
}
