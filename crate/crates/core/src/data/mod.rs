//! Time-series datasets: ingestion, normalization, splitting, minibatching,
//! imbalance arithmetic and synthetic generation.

mod csv_io;
mod normalize;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use normalize::{zscore_apply, zscore_fit, zscore_fit_transform, NormStats};
pub use split::{shuffled_minibatches, stratified_kfold, FoldSplit, MinibatchPlan};
pub use synth::{synth_generate, SynthConfig};

/// Negative (majority) class label.
pub const NEGATIVE: u8 = 0;
/// Positive (minority) class label.
pub const POSITIVE: u8 = 1;

/// One multivariate series. `values` is `channels × length`, row-major by
/// channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSample {
    pub values: Vec<f64>,
    pub label: u8,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<TimeSeriesSample>,
    channels: usize,
    length: usize,
    stats: Option<NormStats>,
}

impl Dataset {
    /// Validates shapes, labels and finiteness of every sample.
    pub fn new(samples: Vec<TimeSeriesSample>, channels: usize, length: usize) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(Error::Shape(format!(
                "channels ({channels}) and length ({length}) must be positive"
            )));
        }
        let width = channels * length;
        for (i, s) in samples.iter().enumerate() {
            if s.values.len() != width {
                return Err(Error::Shape(format!(
                    "sample {i} has {} values, expected {channels}×{length}",
                    s.values.len()
                )));
            }
            if s.label > 1 {
                return Err(Error::InvalidArgument(format!("sample {i} has label {}", s.label)));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("sample {i} contains non-finite values")));
            }
        }
        Ok(Dataset {
            samples,
            channels,
            length,
            stats: None,
        })
    }

    pub fn samples(&self) -> &[TimeSeriesSample] {
        &self.samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    pub(crate) fn with_stats(mut self, stats: Option<NormStats>) -> Self {
        self.stats = stats;
        self
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == POSITIVE).count();
        (pos, self.samples.len() - pos)
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        match self.class_counts() {
            (p, n) if p > 0 && n > 0 => Ok(()),
            (positives, negatives) => Err(Error::SingleClass { positives, negatives }),
        }
    }

    /// New dataset holding the samples at `indices`, in that order. Stats carry over.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            channels: self.channels,
            length: self.length,
            stats: self.stats.clone(),
        }
    }

    /// Flat `n × (channels·length)` copy of the sample values.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.channels * self.length);
        for s in &self.samples {
            out.extend_from_slice(&s.values);
        }
        out
    }

    /// Same dataset with labels flipped.
    pub fn swap_labels(&self) -> Dataset {
        let mut d = self.clone();
        for s in &mut d.samples {
            s.label = 1 - s.label;
        }
        d
    }
}

/// Majority-to-minority ratio `n_neg / n_pos`.
pub fn imbalance_ratio(data: &Dataset) -> Result<f64> {
    let (pos, neg) = data.class_counts();
    ratio_from_counts(neg, pos)
}

pub fn ratio_from_counts(negatives: usize, positives: usize) -> Result<f64> {
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    Ok(negatives as f64 / positives as f64)
}
