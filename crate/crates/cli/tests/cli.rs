use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_haptolab");

const PROFILE: &str = r#"{
    "kind": "profile",
    "params": {"eps": 0.04, "lambda": 1.0, "alpha": 0.1, "C0": 500.0},
    "profile_solve": {"half_width": 20.0, "intervals": 4000}
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], env_root: Option<&Path>, cwd: &Path) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).current_dir(cwd).env_remove("HAPTOLAB_OUTPUT_ROOT");
    if let Some(r) = env_root {
        cmd.env("HAPTOLAB_OUTPUT_ROOT", r);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn profile_run_writes_artifacts_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.json", PROFILE);
    let out = tmp.path().join("run");
    let o = run(&["profile", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("PASS profile_residual"), "{stdout}");
    assert!(stdout.contains("PASS profile_bvp"), "{stdout}");

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["kind"], "profile");
    assert_eq!(manifest["config"]["profile_solve"]["intervals"], 4000);
    assert!(manifest["versions"]["haptolab"].is_string());
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    for f in manifest["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file());
    }

    let table = fs::read_to_string(out.join("profile.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("z,U0,U0_bvp"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 3);
    for cell in row {
        let mantissa = cell.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{cell}");
        assert!(cell.parse::<f64>().is_ok());
    }
}

#[test]
fn identical_configs_give_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.json", PROFILE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = run(&["profile", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()], None, tmp.path());
        assert_eq!(code(&o), 0);
    }
    for f in ["profile.csv", "profile_report.json", "checks.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn output_root_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let text = PROFILE.replace("\"kind\"", "\"output_dir\": \"from_config\", \"kind\"");
    let cfg = write_config(tmp.path(), "p.json", &text);
    let cfg = cfg.to_str().unwrap();

    assert_eq!(code(&run(&["profile", "--config", cfg], None, tmp.path())), 0);
    assert!(tmp.path().join("from_config/manifest.json").is_file());

    let env_root = tmp.path().join("from_env");
    assert_eq!(code(&run(&["profile", "--config", cfg], Some(&env_root), tmp.path())), 0);
    assert!(env_root.join("manifest.json").is_file());

    let flag = tmp.path().join("from_flag");
    let o = run(&["profile", "--config", cfg, "--out", flag.to_str().unwrap()], Some(&env_root), tmp.path());
    assert_eq!(code(&o), 0);
    assert!(flag.join("manifest.json").is_file());
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let cases = [
        ("unknown_key.json", PROFILE.replace("\"kind\"", "\"colour\": 1, \"kind\"")),
        ("not_json.json", "{ kind: ".to_string()),
        (
            "under_resolved.json",
            r#"{"kind": "diffuse", "params": {"eps": 0.04, "lambda": 1.0, "alpha": 0.1, "C0": 500.0}, "cells": 64, "T": 0.001}"#.to_string(),
        ),
    ];
    for (name, text) in cases {
        let cfg = write_config(tmp.path(), name, &text);
        let sub = if name == "under_resolved.json" { "simulate-diffuse" } else { "profile" };
        let o = run(&[sub, "--config", cfg.to_str().unwrap(), "--out", out], None, tmp.path());
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    let missing = tmp.path().join("missing.json");
    assert_eq!(code(&run(&["profile", "--config", missing.to_str().unwrap()], None, tmp.path())), 2);

    // Subcommand and configured experiment disagree.
    let cfg = write_config(tmp.path(), "p.json", PROFILE);
    let o = run(&["simulate-sharp", "--config", cfg.to_str().unwrap(), "--out", out], None, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("profile"));

    // Missing required flag.
    assert_eq!(code(&run(&["profile"], None, tmp.path())), 2);
}

#[test]
fn failed_checks_exit_with_4_only_under_assert() {
    let tmp = tempfile::tempdir().unwrap();
    // A coarse table cannot meet the profile tolerance.
    let cfg = write_config(tmp.path(), "coarse.json", &PROFILE.replace("4000", "200"));
    let out = tmp.path().join("out");
    let args = ["profile", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = run(&args, None, tmp.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL profile_bvp"));
    let mut strict = args.to_vec();
    strict.push("--assert");
    assert_eq!(code(&run(&strict, None, tmp.path())), 4);

    let good = write_config(tmp.path(), "p.json", PROFILE);
    let o = run(&["profile", "--config", good.to_str().unwrap(), "--out", out.to_str().unwrap(), "--assert"], None, tmp.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn solver_failures_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    // The sharp disc vanishes long before T.
    let text = r#"{
        "kind": "compare",
        "params": {"eps": 0.04, "lambda": 1.0, "alpha": 0.1, "C0": 5000.0, "chi": {"constant": {"value": 1.0}}},
        "shape": {"type": "circle", "center": [0.5, 0.5], "radius": 0.06},
        "T": 0.01,
        "snapshots": {"count": 2, "write_fields": false}
    }"#;
    let cfg = write_config(tmp.path(), "c.json", text);
    let out = tmp.path().join("out");
    let o = run(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
