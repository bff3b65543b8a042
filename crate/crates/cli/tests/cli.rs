use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reachmesh_cli::{exit, RunArtifact, Termination};

fn reachmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reachmesh")).args(args).output().unwrap()
}

fn table1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/table1.json")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn degenerate_envelope_is_the_segment() {
    let o = reachmesh(&["envelope", "--start", "0", "0", "0", "--end", "3", "0", "0", "--length", "3", "--kappa", "1"]);
    assert_eq!(code(&o), exit::OK as i32);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for p in v["patches"].as_array().unwrap() {
        let c: Vec<f64> = p["canonical"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(c[0].abs() < 1e-6 && (c[1] - 3.0).abs() < 1e-6, "{c:?}");
        assert!(c[2].abs() < 1e-6 && c[3].abs() < 1e-6, "{c:?}");
    }
}

#[test]
fn envelope_accepts_pi_headings() {
    let o = reachmesh(&["envelope", "--start", "0", "0", "pi/2", "--end", "0", "3", "pi/2", "--length", "3.2", "--kappa", "1"]);
    assert_eq!(code(&o), exit::OK as i32);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["to_world"]["rotation"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn envelope_below_dubins_minimum_is_rejected() {
    let o = reachmesh(&["envelope", "--start", "0", "0", "0", "--end", "3", "0", "0", "--length", "2", "--kappa", "1"]);
    assert_eq!(code(&o), exit::INVALID as i32);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Dubins minimum"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(table1()).unwrap()).unwrap();
    cfg["nfz"][2]["radius"] = serde_json::json!(-5.0);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = reachmesh(&["solve", path.to_str().unwrap(), "--out", dir.path().join("run.json").to_str().unwrap()]);
    assert_eq!(code(&o), exit::INVALID as i32);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nfz[2].radius"));
    assert!(!dir.path().join("run.json").exists());
}

#[test]
fn iteration_limit_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let o = reachmesh(&["solve", table1().to_str().unwrap(), "--max-iter", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), exit::NON_CONVERGED as i32);
    let art = RunArtifact::read(&out).unwrap();
    assert!(matches!(art.termination, Termination::NonConverged { .. }));
    assert_eq!(art.iterations.len(), 2);
}

#[test]
fn clearance_only_verify_of_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    assert_eq!(code(&reachmesh(&["solve", table1().to_str().unwrap(), "--no-refine", "--out", out.to_str().unwrap()])), 0);
    let rep = dir.path().join("verify.json");
    let o = reachmesh(&["verify", out.to_str().unwrap(), "--samples", "0", "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), exit::VIOLATION as i32);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep).unwrap()).unwrap();
    assert_eq!(v["curves_checked"], 0);
    assert_eq!(v["clearance_violations"], serde_json::json!([0, 2, 3]));
}
