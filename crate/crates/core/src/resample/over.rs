use rand::Rng as _;

use super::knn::knn_within;
use super::{FeatureMatrix, SamplerConfig};
use crate::data::POSITIVE;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoteVariant {
    Plain,
    Borderline1,
    Borderline2,
}

/// Minority rows needed to reach `target_ratio` beyond those present.
fn oversample_budget(x: &FeatureMatrix, cfg: &SamplerConfig) -> usize {
    let (pos, neg) = x.class_counts();
    let desired = (cfg.target_ratio * neg as f64).round() as usize;
    desired.saturating_sub(pos)
}

pub fn random_over_sample(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    x.require_both_classes()?;
    let minority = x.indices_of(POSITIVE);
    let mut r = rng::stream(cfg.seed, &[0x524f53]);
    let mut out = x.clone();
    for _ in 0..oversample_budget(x, cfg) {
        let i = minority[r.random_range(0..minority.len())];
        out.push_synthetic(x, i, i, 0.0);
    }
    Ok(out)
}

/// `a + gap * (b - a)`.
pub fn interpolate(a: &[f64], b: &[f64], gap: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + gap * (q - p)).collect()
}

/// Neighbor count usable among the minority rows, reduced with a warning.
fn minority_k(n_min: usize, k: usize) -> Result<usize> {
    if n_min < 2 {
        return Err(Error::ClassTooSmall {
            label: POSITIVE,
            count: n_min,
            required: 2,
        });
    }
    if n_min <= k {
        log::warn!("minority has {n_min} rows; using k = {} instead of {k}", n_min - 1);
        return Ok(n_min - 1);
    }
    Ok(k)
}

/// Number of majority rows among each query's `k` nearest rows of any class.
fn majority_neighbor_counts(x: &FeatureMatrix, queries: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let all: Vec<usize> = (0..x.len()).collect();
    knn_within(x, queries, &all, k, true)
}

pub fn smote(x: &FeatureMatrix, cfg: &SamplerConfig, variant: SmoteVariant) -> Result<FeatureMatrix> {
    x.require_both_classes()?;
    let minority = x.indices_of(POSITIVE);
    let k = cfg.k();
    let k_min = minority_k(minority.len(), k)?;
    let min_nn = knn_within(x, &minority, &minority, k_min, true)?;
    let budget = oversample_budget(x, cfg);
    let mut r = rng::stream(cfg.seed, &[0x534d4f5445]);
    let mut out = x.clone();

    let (seeds, all_nn) = match variant {
        SmoteVariant::Plain => ((0..minority.len()).collect::<Vec<_>>(), Vec::new()),
        _ => {
            let k_all = k.min(x.len() - 1);
            let all_nn = majority_neighbor_counts(x, &minority, k_all)?;
            let danger: Vec<usize> = all_nn
                .iter()
                .enumerate()
                .filter(|(_, nn)| {
                    let m = nn.iter().filter(|&&j| x.label(j) != POSITIVE).count();
                    2 * m > k_all && m < k_all
                })
                .map(|(i, _)| i)
                .collect();
            if danger.is_empty() {
                log::warn!("no borderline minority rows; falling back to plain SMOTE");
                ((0..minority.len()).collect(), Vec::new())
            } else {
                (danger, all_nn)
            }
        }
    };
    let all_class = variant == SmoteVariant::Borderline2 && !all_nn.is_empty();
    for _ in 0..budget {
        let s = seeds[r.random_range(0..seeds.len())];
        let a = minority[s];
        let (b, gap) = if all_class {
            let b = all_nn[s][r.random_range(0..all_nn[s].len())];
            let hi = if x.label(b) == POSITIVE { 1.0 } else { 0.5 };
            (b, r.random_range(0.0..hi))
        } else {
            (min_nn[s][r.random_range(0..k_min)], r.random::<f64>())
        };
        out.push_synthetic(x, a, b, gap);
    }
    Ok(out)
}

/// Splits `total` in proportion to `weights`: floors first, then the
/// leftover units go to the largest remainders (lower index on ties).
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn adasyn(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    x.require_both_classes()?;
    let minority = x.indices_of(POSITIVE);
    let k = cfg.k();
    let k_all = k.min(x.len() - 1);
    let hardness: Vec<f64> = majority_neighbor_counts(x, &minority, k_all)?
        .iter()
        .map(|nn| nn.iter().filter(|&&j| x.label(j) != POSITIVE).count() as f64 / k_all as f64)
        .collect();
    if hardness.iter().all(|&h| h == 0.0) {
        log::warn!("no minority row has majority neighbors; falling back to plain SMOTE");
        return smote(x, cfg, SmoteVariant::Plain);
    }
    let k_min = minority_k(minority.len(), k)?;
    let min_nn = knn_within(x, &minority, &minority, k_min, true)?;
    let per_row = largest_remainder(&hardness, oversample_budget(x, cfg));
    let mut out = x.clone();
    for (s, &count) in per_row.iter().enumerate() {
        let mut r = rng::stream(cfg.seed, &[0x414441, s as u64]);
        for _ in 0..count {
            let b = min_nn[s][r.random_range(0..k_min)];
            let gap = r.random::<f64>();
            out.push_synthetic(x, minority[s], b, gap);
        }
    }
    Ok(out)
}
