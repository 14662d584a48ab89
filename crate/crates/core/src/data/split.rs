use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, NEGATIVE, POSITIVE};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinibatchPlan {
    pub batch_size: usize,
    pub batches: Vec<Vec<usize>>,
    pub seed: u64,
    pub epoch: usize,
}

/// Stratified k-fold: each class is shuffled separately and dealt
/// round-robin, negatives continuing where positives stopped, so per-class
/// and total validation sizes each differ by at most one across folds.
pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in data.samples().iter().enumerate() {
        by_class[s.label as usize].push(i);
    }
    for label in [POSITIVE, NEGATIVE] {
        let count = by_class[label as usize].len();
        if count < k {
            return Err(Error::ClassTooSmall {
                label,
                count,
                required: k,
            });
        }
    }

    let mut assignment = vec![0usize; data.len()];
    let mut dealt = 0usize;
    for label in [POSITIVE, NEGATIVE] {
        let mut idx = by_class[label as usize].clone();
        idx.shuffle(&mut rng::stream(seed, &[label as u64]));
        for i in idx {
            assignment[i] = dealt % k;
            dealt += 1;
        }
    }

    Ok((0..k)
        .map(|fold| {
            let (validation_indices, train_indices) = (0..data.len()).partition(|&i| assignment[i] == fold);
            FoldSplit {
                fold_index: fold,
                train_indices,
                validation_indices,
            }
        })
        .collect())
}

/// A fresh uniform permutation of `0..n` for `epoch`, chunked into batches of
/// `batch_size` (the last batch may be shorter).
pub fn shuffled_minibatches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> MinibatchPlan {
    let batch_size = batch_size.max(1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, &[0x5348_5546, epoch as u64]));
    MinibatchPlan {
        batch_size,
        batches: perm.chunks(batch_size).map(<[usize]>::to_vec).collect(),
        seed,
        epoch,
    }
}
