//! End-to-end runs of the `ell-lab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sign_changing() -> String {
    std::fs::read_to_string(configs().join("sign_changing_ball.toml")).unwrap()
}

fn run(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ell-lab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr));
    })
}

fn number(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn eigen_reports_the_unit_ball_eigenvalue_and_the_window() {
    let out = run(&["eigen", "--stable-output"], &configs().join("sign_changing_ball.toml"));
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let l = number(&report["result"]["lambda1"]);
    assert!((l - std::f64::consts::PI.powi(2)).abs() <= 1e-3 * l, "{l}");
    let w = &report["window"];
    assert!(number(&w["lambda1_v"]) < number(&w["lambda1_vh"]));
    assert!(number(&w["lambda1_vh"]) < number(&w["lambda1_minus_zero"]));
    assert!(report.get("timings").is_none());
    assert_eq!(number(&report["tolerances"]["residual"]), 1e-6);
}

#[test]
fn certify_above_threshold_emits_a_verified_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let text = sign_changing().replace("lambda = 12.0", "lambda = 43.0");
    let out = run(&["certify"], &write_config(dir.path(), &text));
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert!(43.0 > 1.1 * number(&report["window"]["lambda1_minus_zero"]) - 0.1);
    assert_eq!(report["result"]["kind"], "nonexistence_above_threshold");
    assert_eq!(report["result"]["verified"], true);
    assert!(report["timings"]["wall_seconds"].is_number());
}

#[test]
fn missing_exponent_exits_1_naming_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = sign_changing().replace("p = 4.0\n", "");
    let out = run(&["eigen"], &write_config(dir.path(), &text));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing field `p`"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn unknown_subcommand_exits_1() {
    let out = run(&["frobnicate"], &configs().join("sign_changing_ball.toml"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_values_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = sign_changing().replace("p = 4.0", "p = 1.5");
    let out = run(&["eigen"], &write_config(dir.path(), &text));
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn refusal_exits_2() {
    let out = run(&["blowup-fit"], &configs().join("sign_changing_ball.toml"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refused"));
}

#[test]
fn solver_failure_exits_3_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let text = sign_changing().replace("residual = 1e-6", "residual = 1e-6\nmax_iterations = 1");
    let out = run(&["minimize", "--stable-output"], &write_config(dir.path(), &text));
    assert_eq!(out.status.code(), Some(3));
    let report = json(&out);
    assert_eq!(report["status"], "solver_failure");
    assert_eq!(report["result"]["converged"], false);
}

#[test]
fn branch_csv_has_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["branch", "--format", "csv", "--out", dir.path().to_str().unwrap()],
        &configs().join("nonnegative_ball.toml"),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("branch.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("lambda,sigma,energy,e_norm,grad_norm,vp_norm,hp_norm,residual")
    );
    assert_eq!(lines.count(), 8);
}

#[test]
fn stable_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ell-lab");
    let config = configs().join("sign_changing_ball.toml");
    let mut reports = Vec::new();
    for (k, threads) in ["1", "4", "4"].iter().enumerate() {
        let out_dir = dir.path().join(k.to_string());
        let status = Command::new(bin)
            .args(["sweep-mu", "--stable-output", "--seed", "11", "--out"])
            .arg(&out_dir)
            .arg("--config")
            .arg(&config)
            .env("ELL_LAB_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(std::fs::read(out_dir.join("sweep-mu.json")).unwrap());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn echoed_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = run(
        &["certify", "--stable-output", "--out", first.to_str().unwrap()],
        &configs().join("sign_changing_ball.toml"),
    );
    assert_eq!(out.status.code(), Some(0));
    let second = dir.path().join("second");
    let out = run(
        &["certify", "--stable-output", "--out", second.to_str().unwrap()],
        &first.join("certify.config.toml"),
    );
    assert_eq!(out.status.code(), Some(0));
    let a = std::fs::read(first.join("certify.json")).unwrap();
    let b = std::fs::read(second.join("certify.json")).unwrap();
    assert_eq!(a, b);
    let echo_a = std::fs::read(first.join("certify.config.toml")).unwrap();
    let echo_b = std::fs::read(second.join("certify.config.toml")).unwrap();
    assert_eq!(echo_a, echo_b);
}
