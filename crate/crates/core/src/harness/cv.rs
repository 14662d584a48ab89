use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{evaluate, train, TrainConfig, TrainLog};
use crate::data::{imbalance_ratio, stratified_kfold, zscore_apply, zscore_fit_transform, Dataset, NormStats};
use crate::error::Result;
use crate::metrics::{aggregate_folds, Aggregate, MetricRecord};
use crate::models::{build_model, model_spec, ModelKind, ModelSpec};
use crate::rng;

pub const REPORT_VERSION: u32 = 1;

/// How folds are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
    pub train: TrainConfig,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub imbalance_ratio: f64,
    pub channels: usize,
    pub length: usize,
}

impl DataSummary {
    pub fn of(data: &Dataset) -> Result<Self> {
        let (positives, negatives) = data.class_counts();
        Ok(DataSummary {
            samples: data.len(),
            positives,
            negatives,
            imbalance_ratio: imbalance_ratio(data)?,
            channels: data.channels(),
            length: data.length(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub seed: u64,
    pub validation_indices: Vec<usize>,
    pub train_size: usize,
    pub validation_size: usize,
    /// IR of the raw training split, before any resampling.
    pub train_ir: f64,
    /// IR of the data the model was trained on.
    pub trained_ir: Option<f64>,
    /// IR of the raw validation split.
    pub raw_validation_ir: f64,
    /// IR of the validation data actually evaluated.
    pub validation_ir: f64,
    /// Normalization fitted on the raw training split and applied to both.
    pub norm_stats: NormStats,
    pub metrics: MetricRecord,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub seed: u64,
    pub execution: Execution,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub name: String,
    pub config: ExperimentConfig,
    pub model_spec: ModelSpec,
    pub data: DataSummary,
    pub folds: Vec<FoldReport>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub environment: Environment,
}

/// Mean/std of every metric over the fold records.
pub fn aggregates_of(folds: &[FoldReport]) -> BTreeMap<String, Aggregate> {
    let Some(first) = folds.first() else {
        return BTreeMap::new();
    };
    first
        .metrics
        .named()
        .iter()
        .map(|(name, _)| {
            let values: Vec<_> = folds
                .iter()
                .map(|f| f.metrics.get(name).expect("known metric"))
                .collect();
            (name.to_string(), aggregate_folds(&values))
        })
        .collect()
}

impl ExperimentReport {
    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> ExperimentReport {
        let mut r = self.clone();
        r.environment.wall_time_secs = 0.0;
        for f in &mut r.folds {
            f.log.wall_time_secs = 0.0;
        }
        r
    }

    pub fn recompute_aggregates(&self) -> BTreeMap<String, Aggregate> {
        aggregates_of(&self.folds)
    }
}

fn run_fold(data: &Dataset, cfg: &ExperimentConfig, split: &crate::data::FoldSplit) -> Result<FoldReport> {
    let fold = split.fold_index as u64;
    let seed = rng::derive(cfg.train.seed, &[0x464f4c44, fold]);
    let raw_train = data.subset(&split.train_indices);
    let raw_val = data.subset(&split.validation_indices);
    let (train_data, stats) = zscore_fit_transform(&raw_train)?;
    let val_data = zscore_apply(&raw_val, &stats)?;

    let mut tc = cfg.train.clone();
    tc.seed = seed;
    if let Some(s) = tc.sampler.as_mut() {
        s.seed = rng::derive(s.seed, &[seed]);
    }
    let model = build_model(
        cfg.model,
        (data.channels(), data.length()),
        &cfg.overrides,
        rng::derive(seed, &[0x4d4f44]),
    )?;
    let (model, log) = train(model, &train_data, &tc)?;
    let metrics = evaluate(&model, &val_data, tc.threshold)?;
    let trained_ir = match log.train_positives {
        0 => None,
        p if p == log.train_size => None,
        p => Some((log.train_size - p) as f64 / p as f64),
    };
    Ok(FoldReport {
        fold_index: split.fold_index,
        seed,
        validation_indices: split.validation_indices.clone(),
        train_size: raw_train.len(),
        validation_size: raw_val.len(),
        train_ir: imbalance_ratio(&raw_train)?,
        trained_ir,
        raw_validation_ir: imbalance_ratio(&raw_val)?,
        validation_ir: imbalance_ratio(&val_data)?,
        norm_stats: stats,
        metrics,
        log,
    })
}

/// Stratified k-fold evaluation. Each fold fits normalization on its
/// training split only, resamples the training split only (sampled mode),
/// trains a freshly initialized model and evaluates on the validation split.
pub fn run_cross_validation(data: &Dataset, cfg: &ExperimentConfig, execution: Execution) -> Result<ExperimentReport> {
    let start = Instant::now();
    cfg.train.validate()?;
    data.require_both_classes()?;
    let spec = model_spec(cfg.model, (data.channels(), data.length()), &cfg.overrides)?;
    let splits = stratified_kfold(data, cfg.folds, cfg.train.seed)?;
    let results: Vec<Result<FoldReport>> = match execution {
        Execution::Serial => splits.iter().map(|s| run_fold(data, cfg, s)).collect(),
        Execution::Parallel => crate::par::map(splits.len(), |i| run_fold(data, cfg, &splits[i])),
    };
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let name = match &cfg.train.sampler {
        Some(s) => format!("{}/{}", cfg.model, s.method),
        None => format!("{}/{}", cfg.model, cfg.train.mode),
    };
    Ok(ExperimentReport {
        version: REPORT_VERSION,
        name,
        config: cfg.clone(),
        model_spec: spec,
        data: DataSummary::of(data)?,
        aggregates: aggregates_of(&folds),
        folds,
        environment: Environment {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.train.seed,
            execution,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}
