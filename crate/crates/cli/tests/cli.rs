//! End-to-end checks of the `errw` binary: exit codes, reproducibility of
//! result files, and config-file handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn errw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_errw"))
}

fn run(args: &[&str]) -> Output {
    errw().args(args).output().expect("spawn errw")
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

#[test]
fn exchangeability_example_passes_with_zero_violations() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "exchangeability",
        "--preset",
        "segment-2",
        "--depth",
        "2",
        "--a",
        "1",
        "--max-length",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let report = read_json(&out.join("report.json"));
    assert_eq!(report["violations"].as_u64(), Some(0));
    assert_eq!(report["all_equal"], Value::Bool(true));
    assert!(report["total_paths"].as_u64().unwrap() > 0);

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["passed"], Value::Bool(true));
}

#[test]
fn missing_a_is_a_usage_error() {
    let output = run(&["tails", "--preset", "segment-2", "--depth", "5"]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--a"), "stderr should point at the missing flag: {stderr}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"a": "1", "replcias": 10}"#).unwrap();
    let output = run(&["tails", "--config", cfg.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn failed_criterion_exits_one() {
    // Thresholds far above any reachable weight leave nothing to fit.
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "logratio",
        "--preset",
        "segment-2",
        "--depth",
        "6",
        "--a",
        "2",
        "--t",
        "2000",
        "--replicas",
        "50",
        "--thresholds",
        "50,60,70",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["passed"], Value::Bool(false));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("from-config");
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"ladder": {{"preset": "segment-2", "depth": 2}}, "a": "1", "max_length": 4, "out_dir": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();

    let output = run(&["exchangeability", "--config", cfg.to_str().unwrap(), "--a", "2"]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["a"], Value::String("2".into()));
    assert_eq!(manifest["effective"]["a"], Value::String("2".into()));
    assert_eq!(manifest["rng_family"], Value::String("chacha8".into()));
    assert!(manifest["results"].as_array().unwrap().iter().any(|f| f == "violations.csv"));
}

#[test]
fn result_files_do_not_depend_on_parallelism() {
    let dir = TempDir::new().unwrap();
    let mut bytes = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("threads-{threads}"));
        let output = run(&[
            "tails",
            "--preset",
            "segment-2",
            "--depth",
            "6",
            "--a",
            "2",
            "--times",
            "500,1000",
            "--replicas",
            "300",
            "--seed",
            "7",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
        let files: Vec<String> = read_json(&out.join("manifest.json"))["results"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f.as_str().unwrap().to_owned())
            .collect();
        assert!(!files.is_empty());
        let mut blob = Vec::new();
        for name in &files {
            blob.extend_from_slice(&fs::read(out.join(name)).unwrap());
        }
        bytes.push(blob);
    }
    assert_eq!(bytes[0], bytes[1], "result files must be byte-identical across thread counts");
}

#[test]
fn default_output_dir_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let output = errw()
        .args(["exchangeability", "--preset", "segment-2", "--depth", "1", "--a", "1", "--max-length", "4"])
        .env("ERRW_OUT_DIR", dir.path())
        .output()
        .expect("spawn errw");
    assert_eq!(output.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(dir.path().join("exchangeability").join("manifest.json").exists());
}
