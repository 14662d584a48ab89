use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, TimeSeriesSample, NEGATIVE, POSITIVE};
use crate::error::{Error, Result};
use crate::rng;

/// Synthetic imbalanced benchmark: negatives are Gaussian noise, positives
/// carry an additional Hann-windowed sinusoid burst at a random onset and phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub channels: usize,
    pub length: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_pos", self.n_pos),
            ("n_neg", self.n_neg),
            ("channels", self.channels),
            ("length", self.length),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be finite and non-negative"));
        }
        Ok(())
    }
}

fn burst(length: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let width = (length / 4).max(2).min(length);
    let onset = rng.random_range(0..=length - width);
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut out = vec![0.0; length];
    for k in 0..width {
        let u = (k as f64 + 0.5) / width as f64;
        let window = 0.5 * (1.0 - (2.0 * PI * u).cos());
        out[onset + k] = window * (4.0 * PI * u + phase).sin();
    }
    out
}

pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let (channels, length) = (config.channels, config.length);
    let mut labels: Vec<u8> = std::iter::repeat_n(POSITIVE, config.n_pos)
        .chain(std::iter::repeat_n(NEGATIVE, config.n_neg))
        .collect();
    labels.shuffle(&mut rng::stream(config.seed, &[u64::MAX]));

    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut r = rng::stream(config.seed, &[i as u64]);
            let mut values: Vec<f64> = (0..channels * length)
                .map(|_| config.noise_std * r.sample::<f64, _>(StandardNormal))
                .collect();
            if label == POSITIVE {
                let b = burst(length, &mut r);
                for row in values.chunks_exact_mut(length) {
                    row.iter_mut().zip(&b).for_each(|(v, x)| *v += x);
                }
            }
            TimeSeriesSample {
                values,
                label,
                id: format!("synth{i:06}"),
            }
        })
        .collect();
    Dataset::new(samples, channels, length)
}
