//! End-to-end checks of the `corona-lab` binary: exit codes, seeding and
//! certificate replay.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn corona_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corona-lab"))
        .args(args)
        .env_remove("CORONA_LAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_tree(path: &Path) {
    let out = corona_lab(&[
        "--out",
        path.to_str().unwrap(),
        "tree",
        "--depth",
        "1",
        "--horizon",
        "5000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn small_horizon_is_an_input_error() {
    let out = corona_lab(&["tree", "--depth", "1", "--horizon", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("HorizonTooSmall"), "{err}");
}

#[test]
fn unknown_flags_exit_with_usage_error() {
    assert_eq!(corona_lab(&["tree", "--bogus"]).status.code(), Some(2));
    assert_eq!(corona_lab(&["--help"]).status.code(), Some(0));
}

#[test]
fn runs_are_byte_identical_for_a_seed() {
    let args = ["--seed", "11", "sandwich", "--rows", "20"];
    let (a, b) = (corona_lab(&args), corona_lab(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(
        a.stdout,
        corona_lab(&["--seed", "12", "sandwich", "--rows", "20"]).stdout
    );
}

#[test]
fn environment_seed_overrides_flag() {
    let run = |env: Option<&str>, flag: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_corona-lab"));
        cmd.args(["--seed", flag, "sandwich", "--rows", "5"])
            .env_remove("CORONA_LAB_SEED");
        if let Some(v) = env {
            cmd.env("CORONA_LAB_SEED", v);
        }
        cmd.output().unwrap()
    };
    let from_env = run(Some("7"), "99");
    assert_eq!(from_env.stdout, run(None, "7").stdout);
    assert_eq!(run(Some("seven"), "7").status.code(), Some(2));
}

#[test]
fn limits_on_the_model_report_the_failing_diagonal() {
    let out = corona_lab(&["limits", "--paper-model", "--depth", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["config"]["depth"], 8);
    assert_eq!(v["six_term"]["case"], "DiagonalNotSurjective");
}

fn assert_input_error(args: &[&str], kind: &str) {
    let out = corona_lab(args);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("\"error\":\"{kind}\"")), "{err}");
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1,2\n3\n").unwrap();
    assert_input_error(&["stratify", bad.to_str().unwrap()], "InvalidInput");
    std::fs::write(&bad, "{\"levels\": 3}").unwrap();
    assert_input_error(&["limits", bad.to_str().unwrap()], "InvalidInput");
    let missing = dir.path().join("missing.json");
    assert_input_error(&["verify", "--certificate", missing.to_str().unwrap()], "Io");
}

#[test]
fn certificates_replay_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.json");
    write_tree(&path);
    let ok = corona_lab(&["verify", "--certificate", path.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));

    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let phases = doc["tree"]["nodes"][1]["alpha"]["phases"].as_array_mut().unwrap();
    for (i, p) in phases.iter_mut().enumerate() {
        *p = Value::from(if i % 2 == 0 { 0.0 } else { std::f64::consts::PI });
    }
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let tampered = corona_lab(&["verify", "--certificate", path.to_str().unwrap()]);
    assert_eq!(
        tampered.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&tampered.stdout)
    );
}
