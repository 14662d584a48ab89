use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use itsc_core::data::{load_csv, synth_generate, CsvSchema, SynthConfig};
use itsc_core::harness::ExperimentReport;
use itsc_core::metrics::HEADLINE;

fn itsc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itsc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(n_pos: usize, n_neg: usize) -> Value {
    json!({ "n_pos": n_pos, "n_neg": n_neg, "channels": 2, "length": 16, "noise_std": 0.5, "seed": 11 })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_config(out: &str) -> Value {
    json!({
        "data": { "synth": synth(12, 60) },
        "model": "cnn",
        "overrides": { "filters": [4, 4], "kernels": [3, 3], "dense_units": 8 },
        "train": { "mode": "cost_sensitive", "epochs": 1, "batch_size": 32, "seed": 5 },
        "folds": 10,
        "out": out
    })
}

fn read_report(p: &Path) -> ExperimentReport {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn generate_writes_rows_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({ "data": { "synth": synth(50, 1000) }, "out": "a/data.csv" });
    let path = write_config(dir.path(), "gen.json", &cfg);
    let o = itsc(dir.path(), &["generate", "--config", &path]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = fs::read_to_string(dir.path().join("a/data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1051);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/data.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["imbalance_ratio"], json!(20.0));
    assert_eq!(manifest["samples"], json!(1050));
    assert_eq!(manifest["seed"], json!(11));

    let o = itsc(dir.path(), &["generate", "--config", &path, "--out", "b/data.csv"]);
    assert!(o.status.success());
    assert_eq!(csv, fs::read_to_string(dir.path().join("b/data.csv")).unwrap());

    let loaded = load_csv(dir.path().join("a/data.csv"), &CsvSchema::default()).unwrap();
    let cfg: SynthConfig = serde_json::from_value(synth(50, 1000)).unwrap();
    assert_eq!(loaded, synth_generate(&cfg).unwrap());
}

#[test]
fn generate_seed_flag_changes_data() {
    let dir = TempDir::new().unwrap();
    let path = write_config(
        dir.path(),
        "gen.json",
        &json!({ "data": { "synth": synth(5, 20) }, "out": "x.csv" }),
    );
    assert!(itsc(dir.path(), &["generate", "--config", &path]).status.success());
    assert!(itsc(
        dir.path(),
        &["generate", "--config", &path, "--seed", "99", "--out", "y.csv"]
    )
    .status
    .success());
    let a = fs::read_to_string(dir.path().join("x.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("y.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn run_report_is_complete_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &run_config("out/first.json"));
    let o = itsc(dir.path(), &["run", "--config", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("cnn/cost_sensitive"));

    let first = read_report(&dir.path().join("out/first.json"));
    assert_eq!(first.folds.len(), 10);
    for m in HEADLINE {
        assert!(first.aggregates.contains_key(m), "{m}");
        assert!(first.folds.iter().all(|f| f.metrics.get(m).is_some()));
    }
    assert!(dir.path().join("out/first.lambda.csv").exists());

    let o = itsc(dir.path(), &["run", "--config", &path, "--out", "out/second.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = read_report(&dir.path().join("out/second.json"));
    assert_eq!(first.without_timing(), second.without_timing());
}

#[test]
fn invalid_sampler_exits_2_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &run_config("r.json"));
    let o = itsc(dir.path(), &["run", "--config", &path, "--sampler", "smoothe"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.sampler.method"), "{}", stderr(&o));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let mut cfg = run_config("r.json");
    cfg["train"]["learning_rate"] = json!(0.1);
    let path = write_config(dir.path(), "run.json", &cfg);
    let o = itsc(dir.path(), &["run", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let mut cfg = run_config("r.json");
    cfg["overrides"]["width"] = json!(3);
    let path = write_config(dir.path(), "run.json", &cfg);
    let o = itsc(dir.path(), &["run", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));
}

#[test]
fn flag_overrides_are_validated() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &run_config("r.json"));
    for (flag, value) in [
        ("--epochs", "0"),
        ("--folds", "1"),
        ("--batch-size", "0"),
        ("--mode", "magic"),
    ] {
        let o = itsc(dir.path(), &["run", "--config", &path, flag, value]);
        assert_eq!(o.status.code(), Some(2), "{flag}: {}", stderr(&o));
    }
    let o = itsc(dir.path(), &["run", "--config", &path, "--model", "transformer"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_3() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &run_config("r.json"));
    let o = itsc(dir.path(), &["run", "--config", &path, "--data", "missing.csv"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_from_generated_csv() {
    let dir = TempDir::new().unwrap();
    let gen = write_config(
        dir.path(),
        "gen.json",
        &json!({ "data": { "synth": synth(8, 40) }, "out": "d.csv" }),
    );
    assert!(itsc(dir.path(), &["generate", "--config", &gen]).status.success());
    let o = itsc(
        dir.path(),
        &[
            "run", "--data", "d.csv", "--model", "mlp", "--mode", "plain", "--epochs", "1", "--folds", "4", "--out",
            "r.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_report(&dir.path().join("r.json"));
    assert_eq!(r.folds.len(), 4);
    assert_eq!(r.data.samples, 48);
}

fn bench_config(out: &str) -> Value {
    json!({
        "data": { "synth": synth(12, 60) },
        "train": { "mode": "plain", "epochs": 1, "batch_size": 32, "seed": 2 },
        "bench": {
            "matrix": { "models": ["cnn"], "modes": ["plain", "cost_sensitive"] },
            "overrides": { "cnn": { "filters": [4, 4], "kernels": [3, 3], "dense_units": 8 } }
        },
        "folds": 3,
        "out": out
    })
}

#[test]
fn bench_writes_reports_and_summary() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "bench.json", &bench_config("bench"));
    let o = itsc(dir.path(), &["bench", "--config", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("bench");
    let reports: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != "cells.json")
        .collect();
    assert_eq!(reports.len(), 2, "{reports:?}");
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("cnn/plain") && summary.contains("cnn/cost_sensitive"));
    assert_eq!(summary, stdout(&o));

    // Best-per-column marks agree with the stored reports.
    let rs: Vec<ExperimentReport> = reports.iter().map(|n| read_report(&out.join(n))).collect();
    let lines: Vec<&str> = summary.lines().collect();
    for (col, m) in HEADLINE.iter().enumerate() {
        let best = rs
            .iter()
            .filter_map(|r| r.aggregates[*m].mean.value())
            .fold(f64::NEG_INFINITY, f64::max);
        for r in &rs {
            let line = lines.iter().find(|l| l.starts_with(&r.name)).unwrap();
            let cells: Vec<&str> = line[r.name.len()..]
                .split("  ")
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let marked = cells[col].ends_with('*');
            assert_eq!(marked, r.aggregates[*m].mean.value() == Some(best), "{m} in {line}");
        }
    }

    let o = itsc(dir.path(), &["report", "bench"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn bench_validates_every_model_before_running() {
    let dir = TempDir::new().unwrap();
    let mut cfg = bench_config("bench");
    cfg["bench"]["matrix"]["models"] = json!(["cnn", "mlp"]);
    cfg["bench"]["overrides"]["mlp"] = json!({ "depth": 2 });
    let path = write_config(dir.path(), "bench.json", &cfg);
    let o = itsc(dir.path(), &["bench", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("depth"), "{}", stderr(&o));
    assert!(!dir.path().join("bench").exists());

    let mut cfg = bench_config("bench");
    cfg["bench"]["matrix"]["modes"] = json!(["sampled"]);
    let path = write_config(dir.path(), "bench.json", &cfg);
    let o = itsc(dir.path(), &["bench", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bench.matrix.samplers"), "{}", stderr(&o));
}

#[test]
fn report_renders_nan_checks_version_and_exports_lambda() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "run.json", &run_config("r.json"));
    assert!(itsc(dir.path(), &["run", "--config", &path]).status.success());
    let rp = dir.path().join("r.json");

    let o = itsc(dir.path(), &["report", "r.json", "--lambda-csv", "l.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    let report = read_report(&rp);
    let batches: usize = report.folds.iter().map(|f| f.log.batches.len()).sum();
    let csv = fs::read_to_string(dir.path().join("l.csv")).unwrap();
    assert_eq!(csv.lines().count(), batches + 1);

    let mut v: Value = serde_json::from_str(&fs::read_to_string(&rp).unwrap()).unwrap();
    for f in v["folds"].as_array_mut().unwrap() {
        f["metrics"]["recall"] = Value::Null;
    }
    fs::write(dir.path().join("nan.json"), v.to_string()).unwrap();
    let o = itsc(dir.path(), &["report", "nan.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let first = row["cnn/cost_sensitive".len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(first.trim_end_matches('*'), "nan", "{row}");

    v["version"] = json!(99);
    fs::write(dir.path().join("old.json"), v.to_string()).unwrap();
    let o = itsc(dir.path(), &["report", "old.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("version 99"), "{}", stderr(&o));
}
