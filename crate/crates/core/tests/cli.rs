mod common;

use std::fs;
use std::process::{Command, Output};

use common::TOY;

fn nlmc(args: &[&str], out: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NLMC_OUT")
        .output()
        .unwrap()
}

fn error_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("error json on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn upscale_writes_tables_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.json");
    fs::write(&cfg, TOY).unwrap();
    let out = dir.path().join("out");
    let output = nlmc(&["upscale", cfg.to_str().unwrap()], &out);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["steady"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(out.join("steady_errors.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("H,layers,error_pct,error_matrix_pct,error_fracture_pct"));
    assert_eq!(csv.lines().count(), 4);
    assert!(out.join("report.json").exists());
}

#[test]
fn other_subcommands_run_on_the_toy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.json");
    fs::write(&cfg, TOY).unwrap();
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    for args in [
        vec!["solve-fine", c],
        vec!["build-basis", c, "--layers", "2"],
        vec!["transient", c, "--rhs", "block"],
        vec!["upscale", c, "--basis", "spectral", "--bc-policy", "dirichlet", "--threads", "1"],
    ] {
        let output = nlmc(&args, &out);
        assert!(output.status.success(), "{args:?}: {}", String::from_utf8_lossy(&output.stderr));
    }
    assert!(out.join("fine_steady.vtk").exists());
    assert!(out.join("H0.25_L2/center_basis.vtk").exists());
    assert!(out.join("transient_errors.csv").exists());
}

#[test]
fn schema_violation_reports_json_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, TOY.replace(r#""nx": 40"#, r#""nx": "forty""#)).unwrap();
    let output = nlmc(&["upscale", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!output.status.success());
    let err = error_json(&output);
    assert_eq!(err["kind"], "config");
    assert_eq!(err["pointer"], "/fine/nx");
}

#[test]
fn unbalanced_sources_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, TOY.replace(r#""value": -1.0"#, r#""value": -2.0"#)).unwrap();
    let output = nlmc(&["upscale", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!output.status.success());
    assert!(error_json(&output)["error"].is_string());
}

#[test]
fn missing_config_fails_with_io_kind() {
    let dir = tempfile::tempdir().unwrap();
    let output = nlmc(&["report", dir.path().join("nope.json").to_str().unwrap()], &dir.path().join("out"));
    assert!(!output.status.success());
    assert_eq!(error_json(&output)["kind"], "io");
}
