use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Per-channel z-score parameters. Constant channels are stored as
/// `mean = 0, std = 1` so that applying them is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of samples the statistics were fitted on.
    pub fitted_on: usize,
}

pub fn zscore_fit(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (channels, length) = (train.channels(), train.length());
    let count = (train.len() * length) as f64;
    let mut mean = vec![0.0; channels];
    for s in train.samples() {
        for (c, row) in s.values.chunks_exact(length).enumerate() {
            mean[c] += row.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; channels];
    for s in train.samples() {
        for (c, row) in s.values.chunks_exact(length).enumerate() {
            var[c] += row.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let mut std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
    for c in 0..channels {
        if std[c] <= 1e-12 * (1.0 + mean[c].abs()) {
            mean[c] = 0.0;
            std[c] = 1.0;
        }
    }
    Ok(NormStats {
        mean,
        std,
        fitted_on: train.len(),
    })
}

/// Applies `stats` to every sample and records them on the result.
pub fn zscore_apply(data: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if stats.mean.len() != data.channels() || stats.std.len() != data.channels() {
        return Err(Error::Shape(format!(
            "stats cover {} channels, dataset has {}",
            stats.mean.len(),
            data.channels()
        )));
    }
    let length = data.length();
    let mut out = data.clone();
    for s in out.samples.iter_mut() {
        for (c, row) in s.values.chunks_exact_mut(length).enumerate() {
            let (m, sd) = (stats.mean[c], stats.std[c]);
            row.iter_mut().for_each(|v| *v = (*v - m) / sd);
        }
    }
    Ok(out.with_stats(Some(stats.clone())))
}

pub fn zscore_fit_transform(train: &Dataset) -> Result<(Dataset, NormStats)> {
    let stats = zscore_fit(train)?;
    Ok((zscore_apply(train, &stats)?, stats))
}
