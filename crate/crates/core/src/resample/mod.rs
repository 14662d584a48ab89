//! Data-level baselines: over-samplers, under-samplers and cleaners over
//! flattened series with Euclidean distance. Label 1 is the minority class
//! throughout; `target_ratio` is the desired `n_pos / n_neg`.

mod knn;
mod over;
mod under;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TimeSeriesSample, POSITIVE};
use crate::error::{Error, Result};

pub use knn::knn_indices;
pub use over::{adasyn, interpolate, largest_remainder, random_over_sample, smote, SmoteVariant};
pub use under::{enn, ncr, nearmiss1, oss, random_under_sample, tomek_links, tomek_pairs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original(usize),
    /// `row = x[parents.0] + gap * (x[parents.1] - x[parents.0])`, indices
    /// into the sampler's input.
    Synthetic {
        parents: (usize, usize),
        gap: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<f64>,
    dim: usize,
    labels: Vec<u8>,
    origin: Vec<Origin>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<f64>, dim: usize, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || rows.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} values for {} rows of width {dim}",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(i) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value in row {}", i / dim)));
        }
        if let Some(l) = labels.iter().find(|&&l| l > POSITIVE) {
            return Err(Error::InvalidArgument(format!("label {l} is not 0 or 1")));
        }
        let origin = (0..labels.len()).map(Origin::Original).collect();
        Ok(FeatureMatrix {
            rows,
            dim,
            labels,
            origin,
        })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        FeatureMatrix::new(data.flatten(), data.channels() * data.length(), data.labels())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn origin(&self) -> &[Origin] {
        &self.origin
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == POSITIVE).count();
        (pos, self.len() - pos)
    }

    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    fn require_both_classes(&self) -> Result<()> {
        match self.class_counts() {
            (p, n) if p > 0 && n > 0 => Ok(()),
            (positives, negatives) => Err(Error::SingleClass { positives, negatives }),
        }
    }

    /// Rows at `keep`, in that order, with their origin markers.
    fn select(&self, keep: &[usize]) -> FeatureMatrix {
        let mut rows = Vec::with_capacity(keep.len() * self.dim);
        for &i in keep {
            rows.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows,
            dim: self.dim,
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            origin: keep.iter().map(|&i| self.origin[i]).collect(),
        }
    }

    /// Appends a minority row interpolated between rows `a` and `b` of `src`.
    fn push_synthetic(&mut self, src: &FeatureMatrix, a: usize, b: usize, gap: f64) {
        self.rows.extend(interpolate(src.row(a), src.row(b), gap));
        self.labels.push(POSITIVE);
        self.origin.push(Origin::Synthetic { parents: (a, b), gap });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Ros,
    Rus,
    Smote,
    SmoteB1,
    SmoteB2,
    Adasyn,
    Nearmiss1,
    Tomek,
    Enn,
    Oss,
    Ncr,
    SmoteEnn,
    SmoteTl,
}

impl SamplerMethod {
    pub const ALL: [SamplerMethod; 13] = [
        SamplerMethod::Ros,
        SamplerMethod::Rus,
        SamplerMethod::Smote,
        SamplerMethod::SmoteB1,
        SamplerMethod::SmoteB2,
        SamplerMethod::Adasyn,
        SamplerMethod::Nearmiss1,
        SamplerMethod::Tomek,
        SamplerMethod::Enn,
        SamplerMethod::Oss,
        SamplerMethod::Ncr,
        SamplerMethod::SmoteEnn,
        SamplerMethod::SmoteTl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerMethod::Ros => "ros",
            SamplerMethod::Rus => "rus",
            SamplerMethod::Smote => "smote",
            SamplerMethod::SmoteB1 => "smote_b1",
            SamplerMethod::SmoteB2 => "smote_b2",
            SamplerMethod::Adasyn => "adasyn",
            SamplerMethod::Nearmiss1 => "nearmiss1",
            SamplerMethod::Tomek => "tomek",
            SamplerMethod::Enn => "enn",
            SamplerMethod::Oss => "oss",
            SamplerMethod::Ncr => "ncr",
            SamplerMethod::SmoteEnn => "smote_enn",
            SamplerMethod::SmoteTl => "smote_tl",
        }
    }

    /// Neighbor count used when the config leaves it unset.
    pub fn default_k(self) -> usize {
        match self {
            SamplerMethod::Enn | SamplerMethod::Ncr | SamplerMethod::Nearmiss1 => 3,
            _ => 5,
        }
    }

    /// Cleaners only remove rows and have no ratio target.
    pub fn is_cleaner(self) -> bool {
        matches!(
            self,
            SamplerMethod::Tomek | SamplerMethod::Enn | SamplerMethod::Oss | SamplerMethod::Ncr
        )
    }
}

impl fmt::Display for SamplerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sampler method {s:?}")))
    }
}

fn default_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    #[serde(default)]
    pub k_neighbors: Option<usize>,
    #[serde(default = "default_ratio")]
    pub target_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(method: SamplerMethod) -> Self {
        SamplerConfig {
            method,
            k_neighbors: None,
            target_ratio: 1.0,
            seed: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k_neighbors.unwrap_or(self.method.default_k())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == Some(0) {
            return Err(Error::config("sampler.k_neighbors", "must be at least 1"));
        }
        if !(self.target_ratio.is_finite() && self.target_ratio > 0.0) {
            return Err(Error::config("sampler.target_ratio", "must be positive"));
        }
        Ok(())
    }
}

/// Which rows a cleaner may remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanTarget {
    Majority,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cleaner {
    Enn,
    Tomek,
}

/// Plain SMOTE followed by a cleaner that may remove rows of either class.
/// The cleaner's neighbor count is the ENN default, independent of the
/// SMOTE `k_neighbors`.
pub fn combined(x: &FeatureMatrix, cfg: &SamplerConfig, cleaner: Cleaner) -> Result<FeatureMatrix> {
    let smoted = smote(x, cfg, SmoteVariant::Plain)?;
    match cleaner {
        Cleaner::Enn => under::enn_with(&smoted, SamplerMethod::Enn.default_k(), CleanTarget::All),
        Cleaner::Tomek => Ok(under::tomek_with(&smoted, CleanTarget::All)),
    }
}

/// Runs the configured sampler on a feature matrix.
pub fn apply(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    match cfg.method {
        SamplerMethod::Ros => random_over_sample(x, cfg),
        SamplerMethod::Rus => random_under_sample(x, cfg),
        SamplerMethod::Smote => smote(x, cfg, SmoteVariant::Plain),
        SamplerMethod::SmoteB1 => smote(x, cfg, SmoteVariant::Borderline1),
        SamplerMethod::SmoteB2 => smote(x, cfg, SmoteVariant::Borderline2),
        SamplerMethod::Adasyn => adasyn(x, cfg),
        SamplerMethod::Nearmiss1 => nearmiss1(x, cfg),
        SamplerMethod::Tomek => tomek_links(x, cfg),
        SamplerMethod::Enn => enn(x, cfg),
        SamplerMethod::Oss => oss(x, cfg),
        SamplerMethod::Ncr => ncr(x, cfg),
        SamplerMethod::SmoteEnn => combined(x, cfg, Cleaner::Enn),
        SamplerMethod::SmoteTl => combined(x, cfg, Cleaner::Tomek),
    }
}

/// Resamples a normalized training split. Original rows keep their ids;
/// synthetic rows get `syn{n}:{parent_a}|{parent_b}`.
pub fn resample_dataset(data: &Dataset, cfg: &SamplerConfig) -> Result<Dataset> {
    if data.stats().is_none() {
        return Err(Error::NotNormalized);
    }
    let x = FeatureMatrix::from_dataset(data)?;
    let out = apply(&x, cfg)?;
    let src = data.samples();
    let samples = (0..out.len())
        .map(|i| {
            let id = match out.origin[i] {
                Origin::Original(j) => src[j].id.clone(),
                Origin::Synthetic { parents: (a, b), .. } => {
                    format!("syn{i}:{}|{}", src[a].id, src[b].id)
                }
            };
            TimeSeriesSample {
                values: out.row(i).to_vec(),
                label: out.label(i),
                id,
            }
        })
        .collect();
    let ds = Dataset::new(samples, data.channels(), data.length())?;
    Ok(ds.with_stats(data.stats().cloned()))
}
