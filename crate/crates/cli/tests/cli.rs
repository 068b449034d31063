use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirac-detect"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(extra)
        .output()
        .expect("binary runs")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn detect_massless_right_mover() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("detect", &config("massless_right_mover.toml"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(dir.path().join("summary.json"));
    assert!(summary["mass_at_infinity"].as_f64().unwrap() < 1e-8);
    let csv = fs::read_to_string(dir.path().join("distribution.csv")).unwrap();
    assert!(csv.starts_with("t,left_density,right_density,cumulative,survival"));
    let meta = json(dir.path().join("metadata.json"));
    assert_eq!(meta["command"], "detect");
    assert_eq!(meta["seed"], 1);
    assert!(meta["config_source"].as_str().unwrap().contains("[grid]"));
    assert!(meta["scheme"]["moving_boundaries"].is_string());
    assert!(meta["tolerances"]["ledger"].is_number());
}

#[test]
fn povm_check_at_64_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("povm-check", &config("povm_ideal_n64.toml"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("povm_report.json"));
    assert_eq!(report["dim"], 256);
    assert!(report["completeness_residual"].as_f64().unwrap() < 1e-8);
    assert!(report["min_eigenvalue"].as_f64().unwrap() >= -1e-10);
    assert!(report["direct_run_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn superluminal_worldline_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = run("evolve", &config("invalid_superluminal.toml"), &target, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!target.exists());
}

#[test]
fn schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(config("massless_right_mover.toml")).unwrap();
    fs::write(&bad, text.replace("[run]", "[run]\nspeed = 2.0")).unwrap();
    let target = dir.path().join("out");
    assert_eq!(run("detect", &bad, &target, &[]).status.code(), Some(2));
    fs::write(&bad, "[grid]\nx_min = 0.0\n").unwrap();
    assert_eq!(run("detect", &bad, &target, &[]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(run("detect", &missing, &target, &[]).status.code(), Some(1));
    assert!(!target.exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for target in [&a, &b] {
        assert!(run("bohm", &config("bohm_gaussian.toml"), target, &["--seed", "5"]).status.success());
    }
    for name in ["statistics.json", "trajectories.csv", "distribution.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(json(a.join("metadata.json"))["seed"], 5);
    let c = dir.path().join("c");
    assert!(run("bohm", &config("bohm_gaussian.toml"), &c, &["--seed", "6"]).status.success());
    assert_ne!(fs::read(a.join("statistics.json")).unwrap(), fs::read(c.join("statistics.json")).unwrap());
}

#[test]
fn evolve_writes_record_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("evolve", &config("receding_detector.toml"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record = fs::read_to_string(dir.path().join("record.csv")).unwrap();
    assert!(record.starts_with("t,left_flux,right_flux,survival"));
    let snapshot = fs::read_to_string(dir.path().join("snapshot.csv")).unwrap();
    assert_eq!(snapshot.lines().count(), 2001);
}

#[test]
fn two_particle_cross_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("two-particle", &config("two_particle_entangled.toml"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let check = json(dir.path().join("cross_check.json"));
    assert!(check["cross_path_tv"].as_f64().unwrap() < 1e-8);
    assert!(check["product_povm_residual"].as_f64().unwrap() < 1e-7);
    assert!((check["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    let summary = json(dir.path().join("joint_summary.json"));
    assert!(summary["marginal_1"]["infinity"].is_number());
    let joint = fs::read_to_string(dir.path().join("joint.csv")).unwrap();
    assert!(joint.starts_with("t1,b1,t2,b2,mass"));
}
