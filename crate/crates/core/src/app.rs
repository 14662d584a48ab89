//! Config-driven commands behind the `itsc` binary: dataset generation,
//! single experiments, benchmark matrices and report rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{imbalance_ratio, load_csv, synth_generate, write_csv, CsvSchema, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::harness::{
    lambda_csv, render_table, run_benchmark, run_cross_validation, BenchMatrix, Execution, ExperimentConfig,
    ExperimentReport, TableRow, TrainConfig, TrainMode, REPORT_VERSION,
};
use crate::metrics::Aggregate;
use crate::models::{model_spec, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synth(SynthConfig),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv { path, schema } => load_csv(path, schema),
            DataSource::Synth(cfg) => synth_generate(cfg),
        }
    }

    fn shape(&self) -> Option<(usize, usize)> {
        match self {
            DataSource::Synth(cfg) => Some((cfg.channels, cfg.length)),
            DataSource::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub matrix: BenchMatrix,
    /// Hyperparameter overrides per model kind.
    #[serde(default)]
    pub overrides: BTreeMap<ModelKind, BTreeMap<String, Value>>,
}

fn default_model() -> ModelKind {
    ModelKind::Cnn
}

fn default_folds() -> usize {
    10
}

/// One document drives every command. `train` is required by `run` and
/// `bench`, `bench` only by `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub bench: Option<BenchSection>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Run,
    Bench,
}

impl RunConfig {
    /// Typed parse; errors name the offending field path.
    pub fn from_value(value: Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { "<root>".into() } else { path },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::config("<root>", e.to_string()))?;
        Self::from_value(value)
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::config("out", "an output path is required"))
    }

    fn train(&self) -> Result<&TrainConfig> {
        self.train
            .as_ref()
            .ok_or_else(|| Error::config("train", "required by this command"))
    }

    fn bench(&self) -> Result<&BenchSection> {
        self.bench
            .as_ref()
            .ok_or_else(|| Error::config("bench", "required by this command"))
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        if let DataSource::Synth(s) = &self.data {
            s.validate().map_err(|e| prefix("data.synth", e))?;
        }
        self.out()?;
        match cmd {
            Command::Generate => {
                if !matches!(self.data, DataSource::Synth(_)) {
                    return Err(Error::config("data", "generate needs a synth data source"));
                }
            }
            Command::Run => {
                self.train()?.validate()?;
                self.check_folds()?;
                if let Some(shape) = self.data.shape() {
                    self.check_models(shape)?;
                }
            }
            Command::Bench => {
                let base = self.train()?;
                let mut probe = base.clone();
                probe.mode = if probe.sampler.is_some() {
                    TrainMode::Sampled
                } else {
                    TrainMode::Plain
                };
                probe.validate()?;
                self.check_folds()?;
                let m = &self.bench()?.matrix;
                if m.models.is_empty() {
                    return Err(Error::config("bench.matrix.models", "must not be empty"));
                }
                if m.modes.is_empty() {
                    return Err(Error::config("bench.matrix.modes", "must not be empty"));
                }
                if m.modes.contains(&TrainMode::Sampled) && m.samplers.is_empty() {
                    return Err(Error::config(
                        "bench.matrix.samplers",
                        "required when modes include sampled",
                    ));
                }
                if let Some(shape) = self.data.shape() {
                    self.check_models(shape)?;
                }
            }
        }
        Ok(())
    }

    fn check_folds(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::config("folds", "must be at least 2"));
        }
        Ok(())
    }

    fn check_models(&self, shape: (usize, usize)) -> Result<()> {
        match &self.bench {
            Some(b) => {
                for kind in &b.matrix.models {
                    let o = b.overrides.get(kind).cloned().unwrap_or_default();
                    model_spec(*kind, shape, &o).map_err(|e| prefix(&format!("bench.overrides.{kind}"), e))?;
                }
                Ok(())
            }
            None => model_spec(self.model, shape, &self.overrides)
                .map(|_| ())
                .map_err(|e| prefix("overrides", e)),
        }
    }
}

fn prefix(field: &str, e: Error) -> Error {
    match e {
        Error::Config { field: f, message } => Error::config(format!("{field}.{f}"), message),
        Error::UnknownHyperparameter { .. } => Error::config(field, e.to_string()),
        other => other,
    }
}

fn load_checked(cfg: &RunConfig, cmd: Command) -> Result<Dataset> {
    cfg.validate(cmd)?;
    let data = cfg.data.load()?;
    if cfg.data.shape().is_none() {
        cfg.check_models((data.channels(), data.length()))?;
    }
    Ok(data)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub imbalance_ratio: f64,
    pub channels: usize,
    pub length: usize,
    pub noise_std: f64,
}

/// Writes the synthetic dataset as CSV plus a `<stem>.manifest.json` sidecar.
pub fn cmd_generate(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate(Command::Generate)?;
    let DataSource::Synth(synth) = &cfg.data else {
        unreachable!("validated above")
    };
    let out = cfg.out()?.to_path_buf();
    let data = synth_generate(synth)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_csv(&out, &data)?;
    let (positives, negatives) = data.class_counts();
    let manifest = Manifest {
        seed: synth.seed,
        samples: data.len(),
        positives,
        negatives,
        imbalance_ratio: imbalance_ratio(&data)?,
        channels: data.channels(),
        length: data.length(),
        noise_std: synth.noise_std,
    };
    let mpath = sidecar(&out, ".manifest.json");
    write(&mpath, &serde_json::to_string_pretty(&manifest)?)?;
    Ok((out, mpath))
}

/// Cross-validated run; writes the JSON report to `out` and the λ trajectory
/// to `<stem>.lambda.csv`.
pub fn cmd_run(cfg: &RunConfig) -> Result<(ExperimentReport, PathBuf)> {
    let data = load_checked(cfg, Command::Run)?;
    let exp = ExperimentConfig {
        model: cfg.model,
        overrides: cfg.overrides.clone(),
        train: cfg.train()?.clone(),
        folds: cfg.folds,
    };
    let report = run_cross_validation(&data, &exp, cfg.execution)?;
    let out = cfg.out()?;
    write(out, &serde_json::to_string_pretty(&report)?)?;
    write(&sidecar(out, ".lambda.csv"), &lambda_csv(&report))?;
    Ok((report, out.to_path_buf()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub name: String,
    pub seed: u64,
    pub report: Option<String>,
    pub error: Option<String>,
}

/// Runs the matrix into directory `out`: one report per successful cell,
/// `cells.json` listing every cell and `summary.txt` with the table.
pub fn cmd_bench(cfg: &RunConfig) -> Result<(Vec<CellSummary>, String)> {
    let data = load_checked(cfg, Command::Bench)?;
    let bench = cfg.bench()?;
    let dir = cfg.out()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cells = run_benchmark(
        &data,
        &bench.matrix,
        cfg.train()?,
        &bench.overrides,
        cfg.folds,
        cfg.execution,
    );
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for c in cells {
        let file = format!("{:02}-{}.json", c.index, c.name.replace('/', "-"));
        let report = match &c.report {
            Some(r) => {
                write(&dir.join(&file), &serde_json::to_string_pretty(r)?)?;
                rows.push(TableRow::from_report(r));
                Some(file)
            }
            None => {
                rows.push(TableRow {
                    name: c.name.clone(),
                    aggregates: Err(c.error.clone().unwrap_or_default()),
                });
                None
            }
        };
        summary.push(CellSummary {
            index: c.index,
            name: c.name,
            seed: c.seed,
            report,
            error: c.error,
        });
    }
    let mut table = render_table(&rows);
    let failed: Vec<_> = summary.iter().filter(|c| c.error.is_some()).collect();
    if !failed.is_empty() {
        table.push_str(&format!("\n{} of {} cells failed:\n", failed.len(), summary.len()));
        for c in failed {
            table.push_str(&format!("  {}: {}\n", c.name, c.error.as_deref().unwrap_or_default()));
        }
    }
    write(&dir.join("cells.json"), &serde_json::to_string_pretty(&summary)?)?;
    write(&dir.join("summary.txt"), &table)?;
    Ok((summary, table))
}

/// Parses a report, rejecting other schema versions before the typed parse.
pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let found = value.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
    if found != REPORT_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: REPORT_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}

/// Report files named directly, plus every `*.json` report inside named
/// directories (sorted, `cells.json` excluded).
pub fn collect_reports(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension().is_some_and(|x| x == "json") && f.file_name().is_some_and(|n| n != "cells.json")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn max_aggregate_gap(a: &BTreeMap<String, Aggregate>, b: &BTreeMap<String, Aggregate>) -> f64 {
    let gap = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    a.iter()
        .map(|(k, x)| match b.get(k) {
            Some(y) => gap(x.mean.value(), y.mean.value()).max(gap(x.std.value(), y.std.value())),
            None => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Renders the table for `paths` from aggregates recomputed out of the fold
/// records. With `lambda_out`, also writes the λ trajectory of the single
/// report given.
pub fn cmd_report(paths: &[PathBuf], lambda_out: Option<&Path>) -> Result<String> {
    let files = collect_reports(paths)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument("no reports given".into()));
    }
    if lambda_out.is_some() && files.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "a lambda CSV needs exactly one report, got {}",
            files.len()
        )));
    }
    let mut rows = Vec::new();
    for f in &files {
        let r = read_report(f)?;
        let recomputed = r.recompute_aggregates();
        if max_aggregate_gap(&recomputed, &r.aggregates) > 1e-12 {
            log::warn!("{}: stored aggregates disagree with the fold records", f.display());
        }
        if let Some(path) = lambda_out {
            write(path, &lambda_csv(&r))?;
        }
        rows.push(TableRow {
            name: r.name.clone(),
            aggregates: Ok(recomputed),
        });
    }
    Ok(render_table(&rows))
}
