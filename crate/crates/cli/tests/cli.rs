use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn barlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barlab")).args(args).output().expect("barlab runs")
}

fn run(dir: &Path, command: &str, config: &str, out: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{out}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(out);
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    barlab(&args)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr has a record")).unwrap()
}

const FULL_TREE: &str = r#"
seed = 7
[model]
law = { p10 = 1.0, p0 = 0.0, p1 = 0.0 }
params = { alpha0 = 0.5, beta0 = 1.0, alpha1 = 0.3, beta1 = 0.8, alpha0p = 0.4, beta0p = 0.9, alpha1p = 0.2, beta1p = 1.1 }
noise = { sigma = 1.0, rho = 0.0, sigma0 = 1.0, sigma1 = 1.0, mode = "noiseless" }
[simulate]
depth = 3
"#;

const BASE: &str = r#"
seed = 11
[model]
law = { p10 = 0.9, p0 = 0.05, p1 = 0.05 }
params = { alpha0 = 0.5, beta0 = 1.0, alpha1 = 0.3, beta1 = 0.8, alpha0p = 0.4, beta0p = 0.9, alpha1p = 0.2, beta1p = 1.1 }
noise = { sigma = 0.3, rho = 0.2, sigma0 = 0.3, sigma1 = 0.3 }
[deviation]
kind = "uncentered"
deltas = [0.1, 0.3]
depths = [3, 5]
n_rep = 500
[bounds]
deltas = [0.2]
depths = [2, 4]
"#;

#[test]
fn noiseless_full_tree_has_every_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "simulate", FULL_TREE, "sim", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let nodes = String::from_utf8(read(&dir.path().join("sim/nodes.csv"))).unwrap();
    let mut lines = nodes.lines();
    assert_eq!(lines.next(), Some("label,generation,kind,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    let labels: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(labels, (1..=15).collect::<Vec<_>>());
    // X_1 = 0, so X_2 = beta0 and X_3 = beta1.
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[1][3].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[2][3].parse::<f64>().unwrap(), 0.8);
    let report: Value = serde_json::from_slice(&read(&dir.path().join("sim/report.json"))).unwrap();
    assert_eq!(report["results"]["alive_cells"], 15);
}

#[test]
fn reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = run(dir.path(), "deviation", BASE, name, &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["report.json", "cells.csv"] {
        assert_eq!(read(&dir.path().join("a").join(file)), read(&dir.path().join("b").join(file)), "{file}");
    }
    let seeded = run(dir.path(), "deviation", BASE, "c", &["--seed", "12"]);
    assert!(seeded.status.success());
    assert_ne!(read(&dir.path().join("a/cells.csv")), read(&dir.path().join("c/cells.csv")));
}

#[test]
fn bounds_reject_slow_growth() {
    let dir = tempfile::tempdir().unwrap();
    let config = BASE.replace("p10 = 0.9, p0 = 0.05, p1 = 0.05", "p10 = 0.3, p0 = 0.35, p1 = 0.35");
    let out = run(dir.path(), "bounds", &config, "bounds", &[]);
    assert_eq!(out.status.code(), Some(2));
    let record = error_record(&out);
    assert_eq!(record["status"], "error");
    assert_eq!(record["kind"], "invalid-config");
    assert!(record["errors"].to_string().contains("sqrt(2)"), "{record}");
    assert!(!dir.path().join("bounds").exists());
}

#[test]
fn every_issue_is_reported_and_nothing_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let config = BASE.replace("rho = 0.2", "rho = 1.0").replace("deltas = [0.1, 0.3]", "deltas = []");
    let out = run(dir.path(), "deviation", &config, "bad", &[]);
    assert_eq!(out.status.code(), Some(2));
    let errors = error_record(&out)["errors"].as_array().unwrap().clone();
    assert!(errors.len() >= 2, "{errors:?}");
    let text = serde_json::to_string(&errors).unwrap();
    assert!(text.contains("positive-definite") && text.contains("delta grid is empty"), "{text}");
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn report_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "deviation", BASE, "first", &[]);
    assert!(out.status.success());
    let first = dir.path().join("first");

    let again = dir.path().join("again");
    let re = barlab(&["report", "--config", first.join("report.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(re.status.success(), "{}", String::from_utf8_lossy(&re.stderr));
    for file in ["report.json", "cells.csv", "decay.csv"] {
        assert_eq!(read(&first.join(file)), read(&again.join(file)), "{file}");
    }

    let rerun = dir.path().join("rerun");
    let re = barlab(&["deviation", "--config", first.join("manifest.json").to_str().unwrap(), "--out", rerun.to_str().unwrap()]);
    assert!(re.status.success(), "{}", String::from_utf8_lossy(&re.stderr));
    assert_eq!(read(&first.join("report.json")), read(&rerun.join("report.json")));

    let manifest: Value = serde_json::from_slice(&read(&first.join("manifest.json"))).unwrap();
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"report.json") && outputs.contains(&"cells.csv"));
    let leftovers =
        std::fs::read_dir(&first).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp")).count();
    assert_eq!(leftovers, 0);
}

#[test]
fn every_command_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{BASE}\n[chain]\nn_rep = 2000\nk_max = 10\nlong_run = {{ length = 100000 }}\n[estimate]\ndepths = [4, 6]\n");
    for command in ["simulate", "estimate", "deviation", "chain", "bounds"] {
        let out = run(dir.path(), command, &config, command, &["--jobs", "2"]);
        assert!(out.status.success(), "{command}: {}", String::from_utf8_lossy(&out.stderr));
        let report: Value = serde_json::from_slice(&read(&dir.path().join(command).join("report.json"))).unwrap();
        assert_eq!(report["command"], command);
        assert_eq!(report["seed"], 11);
    }
}

#[test]
fn set_overrides_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "bounds", BASE, "set", &["--set", "bounds.depths=[7]"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&read(&dir.path().join("set/report.json"))).unwrap();
    assert_eq!(report["config"]["bounds"]["depths"], serde_json::json!([7]));

    let out = run(dir.path(), "bounds", BASE, "typo", &["--set", "bounds.dephts=[7]"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["errors"].to_string().contains("dephts"));
}
