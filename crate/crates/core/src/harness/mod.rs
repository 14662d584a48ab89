//! Training loop, cross-validated evaluation and the experiment matrix.

mod bench;
mod cv;
mod table;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::LambdaAssignment;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::resample::SamplerConfig;

pub use bench::{run_benchmark, BenchMatrix, CellResult};
pub use cv::{
    aggregates_of, run_cross_validation, DataSummary, Environment, Execution, ExperimentConfig, ExperimentReport,
    FoldReport, REPORT_VERSION,
};
pub use table::{lambda_csv, render_table, TableRow};
pub use train::{adaptive_batch_loss, evaluate, train, BatchRecord, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Unweighted mean cross-entropy.
    Plain,
    /// Plain training on resampled training folds.
    Sampled,
    /// Adaptive per-batch λ with the class-balanced loss.
    CostSensitive,
    /// Constant minority weight IR under a plain empirical mean.
    FixedCost,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Plain,
        TrainMode::Sampled,
        TrainMode::CostSensitive,
        TrainMode::FixedCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Plain => "plain",
            TrainMode::Sampled => "sampled",
            TrainMode::CostSensitive => "cost_sensitive",
            TrainMode::FixedCost => "fixed_cost",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown training mode {s:?}")))
    }
}

fn default_batch_size() -> usize {
    512
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub lambda_assignment: LambdaAssignment,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, epochs: usize) -> Self {
        TrainConfig {
            mode,
            sampler: None,
            epochs,
            batch_size: default_batch_size(),
            adam: AdamConfig::default(),
            seed: 0,
            threshold: default_threshold(),
            lambda_assignment: LambdaAssignment::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("train.threshold", "must lie in [0, 1]"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::config("train.adam.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::config("train.adam", "betas must lie in [0, 1)"));
        }
        if a.epsilon.is_nan() || a.epsilon <= 0.0 {
            return Err(Error::config("train.adam.epsilon", "must be positive"));
        }
        match (&self.sampler, self.mode) {
            (Some(s), TrainMode::Sampled) => s.validate().map_err(|e| match e {
                Error::Config { field, message } => Error::config(format!("train.{field}"), message),
                other => other,
            }),
            (None, TrainMode::Sampled) => Err(Error::config("train.sampler", "required when mode is sampled")),
            (Some(_), mode) => Err(Error::config(
                "train.sampler",
                format!("only allowed when mode is sampled, not {mode}"),
            )),
            (None, _) => Ok(()),
        }
    }
}
