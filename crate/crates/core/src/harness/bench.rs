use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{run_cross_validation, Execution, ExperimentConfig, ExperimentReport, TrainConfig, TrainMode};
use crate::data::Dataset;
use crate::models::ModelKind;
use crate::resample::{SamplerConfig, SamplerMethod};
use crate::rng;

/// Models × modes, with `sampled` expanded into one cell per sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchMatrix {
    pub models: Vec<ModelKind>,
    pub modes: Vec<TrainMode>,
    #[serde(default)]
    pub samplers: Vec<SamplerMethod>,
}

impl BenchMatrix {
    /// The full comparison: every model under plain training, each
    /// sampler, the adaptive cost and the fixed cost.
    pub fn full() -> Self {
        BenchMatrix {
            models: ModelKind::ALL.to_vec(),
            modes: vec![
                TrainMode::Plain,
                TrainMode::Sampled,
                TrainMode::CostSensitive,
                TrainMode::FixedCost,
            ],
            samplers: SamplerMethod::ALL.to_vec(),
        }
    }

    pub fn cells(&self) -> Vec<(ModelKind, TrainMode, Option<SamplerMethod>)> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &mode in &self.modes {
                if mode == TrainMode::Sampled {
                    out.extend(self.samplers.iter().map(|&s| (model, mode, Some(s))));
                } else {
                    out.push((model, mode, None));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub name: String,
    pub model: ModelKind,
    pub mode: TrainMode,
    pub sampler: Option<SamplerMethod>,
    pub seed: u64,
    pub report: Option<ExperimentReport>,
    pub error: Option<String>,
}

/// Runs every cell of `matrix`. Cell `i` uses seed `derive(base.seed, [i])`;
/// a failing cell is recorded and the rest still run. `base.sampler`, when
/// present, supplies `k_neighbors` and `target_ratio` for sampled cells.
pub fn run_benchmark(
    data: &Dataset,
    matrix: &BenchMatrix,
    base: &TrainConfig,
    overrides: &BTreeMap<ModelKind, BTreeMap<String, Value>>,
    folds: usize,
    execution: Execution,
) -> Vec<CellResult> {
    matrix
        .cells()
        .into_iter()
        .enumerate()
        .map(|(index, (model, mode, sampler))| {
            let seed = rng::derive(base.seed, &[index as u64]);
            let mut train = base.clone();
            train.mode = mode;
            train.seed = seed;
            train.sampler = sampler.map(|method| SamplerConfig {
                method,
                seed,
                ..base.sampler.clone().unwrap_or_else(|| SamplerConfig::new(method))
            });
            let name = match sampler {
                Some(s) => format!("{model}/{s}"),
                None => format!("{model}/{mode}"),
            };
            let cfg = ExperimentConfig {
                model,
                overrides: overrides.get(&model).cloned().unwrap_or_default(),
                train,
                folds,
            };
            log::info!("cell {index}: {name}");
            let (report, error) = match run_cross_validation(data, &cfg, execution) {
                Ok(r) => (Some(r), None),
                Err(e) => {
                    log::warn!("cell {name} failed: {e}");
                    (None, Some(e.to_string()))
                }
            };
            CellResult {
                index,
                name,
                model,
                mode,
                sampler,
                seed,
                report,
                error,
            }
        })
        .collect()
}
