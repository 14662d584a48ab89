use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::knn::{knn_within, nearest, sq_dist};
use super::{CleanTarget, FeatureMatrix, SamplerConfig};
use crate::data::{NEGATIVE, POSITIVE};
use crate::error::Result;
use crate::rng;

/// Majority rows to keep so that `n_pos / n_neg` reaches `target_ratio`.
fn undersample_keep(x: &FeatureMatrix, cfg: &SamplerConfig) -> usize {
    let (pos, neg) = x.class_counts();
    let desired = (pos as f64 / cfg.target_ratio).round() as usize;
    desired.clamp(1, neg.max(1)).min(neg)
}

fn without(x: &FeatureMatrix, removed: &BTreeSet<usize>) -> FeatureMatrix {
    let keep: Vec<usize> = (0..x.len()).filter(|i| !removed.contains(i)).collect();
    x.select(&keep)
}

pub fn random_under_sample(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    x.require_both_classes()?;
    let mut majority = x.indices_of(NEGATIVE);
    let keep = undersample_keep(x, cfg);
    let mut r = rng::stream(cfg.seed, &[0x525553]);
    majority.shuffle(&mut r);
    let removed: BTreeSet<usize> = majority[keep..].iter().copied().collect();
    Ok(without(x, &removed))
}

pub fn nearmiss1(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    x.require_both_classes()?;
    let minority = x.indices_of(POSITIVE);
    let majority = x.indices_of(NEGATIVE);
    let k = cfg.k().min(minority.len());
    let nn = knn_within(x, &majority, &minority, k, false)?;
    let mut scored: Vec<(f64, usize)> = majority
        .iter()
        .zip(&nn)
        .map(|(&i, near)| {
            let mean = near.iter().map(|&j| sq_dist(x.row(i), x.row(j)).sqrt()).sum::<f64>() / k as f64;
            (mean, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = undersample_keep(x, cfg);
    let removed: BTreeSet<usize> = scored[keep..].iter().map(|&(_, i)| i).collect();
    Ok(without(x, &removed))
}

/// Row pairs `(a, b)`, `a < b`, of opposite labels that are each other's
/// nearest neighbor.
pub fn tomek_pairs(x: &FeatureMatrix) -> Vec<(usize, usize)> {
    if x.len() < 2 {
        return Vec::new();
    }
    let all: Vec<usize> = (0..x.len()).collect();
    let nn = knn_within(x, &all, &all, 1, true).expect("at least two rows");
    (0..x.len())
        .filter_map(|a| {
            let b = nn[a][0];
            (a < b && nn[b][0] == a && x.label(a) != x.label(b)).then_some((a, b))
        })
        .collect()
}

fn removable(x: &FeatureMatrix, i: usize, target: CleanTarget) -> bool {
    target == CleanTarget::All || x.label(i) == NEGATIVE
}

pub(crate) fn tomek_with(x: &FeatureMatrix, target: CleanTarget) -> FeatureMatrix {
    let mut removed = BTreeSet::new();
    for (a, b) in tomek_pairs(x) {
        for i in [a, b] {
            if removable(x, i, target) {
                removed.insert(i);
            }
        }
    }
    without(x, &removed)
}

pub fn tomek_links(x: &FeatureMatrix, _cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    Ok(tomek_with(x, CleanTarget::Majority))
}

/// Rows (among those `target` allows) whose label loses the vote of their
/// `k` nearest neighbors. A tied vote keeps the row.
pub(crate) fn enn_removals(x: &FeatureMatrix, k: usize, target: CleanTarget) -> Result<BTreeSet<usize>> {
    if x.len() < 2 {
        return Ok(BTreeSet::new());
    }
    let k = k.min(x.len() - 1);
    let queries: Vec<usize> = (0..x.len()).filter(|&i| removable(x, i, target)).collect();
    let all: Vec<usize> = (0..x.len()).collect();
    let nn = knn_within(x, &queries, &all, k, true)?;
    Ok(queries
        .iter()
        .zip(&nn)
        .filter(|(&i, near)| {
            let same = near.iter().filter(|&&j| x.label(j) == x.label(i)).count();
            2 * same < near.len()
        })
        .map(|(&i, _)| i)
        .collect())
}

pub(crate) fn enn_with(x: &FeatureMatrix, k: usize, target: CleanTarget) -> Result<FeatureMatrix> {
    Ok(without(x, &enn_removals(x, k, target)?))
}

pub fn enn(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    enn_with(x, cfg.k(), CleanTarget::Majority)
}

pub fn oss(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    let majority = x.indices_of(NEGATIVE);
    if majority.is_empty() || majority.len() == x.len() {
        return Ok(x.clone());
    }
    let mut r = rng::stream(cfg.seed, &[0x4f5353]);
    let anchor = majority[r.random_range(0..majority.len())];
    let mut seed_set = x.indices_of(POSITIVE);
    seed_set.push(anchor);
    seed_set.sort_unstable();
    let mut kept: BTreeSet<usize> = seed_set.iter().copied().collect();
    for &i in &majority {
        if i == anchor {
            continue;
        }
        let nn = nearest(x, x.row(i), &seed_set, 1, None);
        if x.label(nn[0]) != NEGATIVE {
            kept.insert(i);
        }
    }
    let kept: Vec<usize> = kept.into_iter().collect();
    Ok(tomek_with(&x.select(&kept), CleanTarget::Majority))
}

pub fn ncr(x: &FeatureMatrix, cfg: &SamplerConfig) -> Result<FeatureMatrix> {
    let k = cfg.k();
    let mut removed = enn_removals(x, k, CleanTarget::Majority)?;
    let minority = x.indices_of(POSITIVE);
    if x.len() >= 2 && !minority.is_empty() {
        let all: Vec<usize> = (0..x.len()).collect();
        let nn = knn_within(x, &minority, &all, k.min(x.len() - 1), true)?;
        for near in nn {
            let majority_votes = near.iter().filter(|&&j| x.label(j) == NEGATIVE).count();
            if 2 * majority_votes > near.len() {
                removed.extend(near.into_iter().filter(|&j| x.label(j) == NEGATIVE));
            }
        }
    }
    Ok(without(x, &removed))
}
