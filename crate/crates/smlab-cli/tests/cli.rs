//! End-to-end tests of the `smlab` binary: exit codes, config handling, and
//! byte-level determinism of the emitted tables.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smlab"))
        .args(args)
        .output()
        .expect("binary must launch")
}

/// CSV bodies with the timestamp comment line stripped.
fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let text = fs::read_to_string(&path).unwrap();
            let body = text.split_once('\n').map(|(_, rest)| rest.to_string()).unwrap();
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), body));
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_gives_byte_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let run_a = smlab(&[
        "stein",
        "--grid-M",
        "64",
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
    ]);
    let run_b = smlab(&[
        "stein",
        "--grid-M",
        "64",
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(run_a.status.code(), run_b.status.code());
    let bodies_a = csv_bodies(&a);
    let bodies_b = csv_bodies(&b);
    assert!(!bodies_a.is_empty(), "run must emit at least one table");
    assert_eq!(bodies_a, bodies_b, "same seed must reproduce every table byte for byte");
}

#[test]
fn different_seed_changes_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    smlab(&["stein", "--grid-M", "64", "--seed", "7", "--out", a.to_str().unwrap()]);
    smlab(&["stein", "--grid-M", "64", "--seed", "8", "--out", b.to_str().unwrap()]);
    assert_ne!(
        csv_bodies(&a),
        csv_bodies(&b),
        "the seed must actually steer the random family"
    );
}

#[test]
fn invalid_config_exits_one_naming_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"schema":"smlab/1","experiment":"stein","r":2.5}"#,
    )
    .unwrap();
    let out = smlab(&["stein", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("1 ≤ r < 2"), "stderr must name the violated constraint: {stderr}");
}

#[test]
fn config_experiment_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mismatch.json");
    fs::write(&cfg, r#"{"schema":"smlab/1","experiment":"stein"}"#).unwrap();
    let out = smlab(&["growth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stein"), "mismatch message names the config experiment: {stderr}");
}

#[test]
fn unreadable_config_exits_one() {
    let out = smlab(&["stein", "--config", "/nonexistent/nowhere.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn passing_run_exits_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlab(&["multiplier-check", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["format"], "smlab-report/1");
    assert_eq!(report["config"]["schema"], "smlab/1");
    assert!(report["verdicts"].as_array().is_some_and(|v| !v.is_empty()));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"), "verdict lines are printed: {stdout}");
}

#[test]
fn operator_override_reaches_the_run() {
    // doob-check requires an inverse-square operator; overriding it with the
    // free Laplacian must be rejected as a configuration error.
    let out = smlab(&["doob-check", "--operator", "free_laplacian"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("inv_square"), "got: {stderr}");
}

#[test]
fn grid_override_is_validated() {
    let out = smlab(&["stein", "--grid-M", "8"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("at least 16"), "got: {stderr}");
}
