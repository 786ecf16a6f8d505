use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resdiff"))
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn run(args: &[&str]) -> (i32, serde_json::Value) {
    let out = bin().args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = serde_json::from_str(stdout.trim()).unwrap_or(serde_json::Value::Null);
    (out.status.code().unwrap(), json)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let map = data("maps/doubling.toml");
    let path = dir.join("cfg.toml");
    std::fs::write(&path, format!("map = {:?}\n{body}", map.display().to_string())).unwrap();
    path
}

const SMALL_SWEEP: &str = "seed = 3\n[sweep]\neps = [0.2, 0.1]\nv = [1.0]\ntrajectories = 2000\nsteps_per_log = 50\n";

#[test]
fn oracle_fixtures_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("configs/oracle.toml");
    let (code, json) = run(&["oracle", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{json}");
    let csv = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let diff: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(diff <= 1e-6, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 6);
    assert!(dir.path().join("oracle.manifest.json").exists());
}

#[test]
fn malformed_map_is_a_config_error() {
    let cfg = data("configs/malformed.toml");
    let dir = tempfile::tempdir().unwrap();
    let (code, json) = run(&["validate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(json["status"], "config_error");
    let errors = json["errors"].as_array().unwrap();
    assert!(!errors.is_empty());
    assert!(errors.iter().all(|e| e["field"] == "map" && e["message"].is_string()));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\neps = [0.1]\nv = [1.0]\ntrajectories = 10\nspeed = 2\n");
    let (code, json) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(json["status"], "config_error");
}

#[test]
fn sweep_is_reproducible_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (code, json) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code, 0, "{json}");
    let (code, _) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "4"]);
    assert_eq!(code, 0);
    let ca = std::fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("sweep.csv")).unwrap());
    assert!(String::from_utf8(ca).unwrap().starts_with("eps,rate,rate_se,kv_rate,lower_bound,envelope,t_mix,c_emp\n"));

    let replayed = dir.path().join("c");
    let manifest = a.join("sweep.manifest.json");
    let (code, json) = run(&["replay", manifest.to_str().unwrap(), "--out", replayed.to_str().unwrap()]);
    assert_eq!(code, 0, "{json}");
    assert_eq!(std::fs::read(replayed.join("sweep.csv")).unwrap(), std::fs::read(a.join("sweep.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "99"]);
    assert_ne!(std::fs::read(a.join("sweep.csv")).unwrap(), std::fs::read(b.join("sweep.csv")).unwrap());
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.join("sweep.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
}

#[test]
fn violated_bound_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_SWEEP.replace("steps_per_log = 50", "steps_per_log = 50\nc_floor = 5.0"));
    let (code, json) = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(json["status"], "assertion_failed");
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn tampered_manifest_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SWEEP);
    run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let path = dir.path().join("sweep.manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&path, m.to_string()).unwrap();
    let (code, json) = run(&["replay", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(json["mismatched"][0], "sweep.csv");
}

#[test]
fn missing_section_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n");
    let (code, json) = run(&["mixing", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(json["errors"][0]["field"], "mixing");
}
