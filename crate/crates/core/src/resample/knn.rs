use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::par;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` rows of `pool` nearest to `query`, skipping `exclude`. Ties go to
/// the lower index.
pub(crate) fn nearest(
    x: &FeatureMatrix,
    query: &[f64],
    pool: &[usize],
    k: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| Some(j) != exclude)
        .map(|&j| (sq_dist(query, x.row(j)), j))
        .collect();
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, by);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Neighbors of each query row within `pool`, using each query's own row
/// index as the exclusion when `exclude_self` is set.
pub(crate) fn knn_within(
    x: &FeatureMatrix,
    queries: &[usize],
    pool: &[usize],
    k: usize,
    exclude_self: bool,
) -> Result<Vec<Vec<usize>>> {
    for &q in queries {
        let available = pool.len() - usize::from(exclude_self && pool.contains(&q));
        if k > available {
            return Err(Error::TooManyNeighbors { k, available });
        }
    }
    Ok(par::map(queries.len(), |i| {
        let q = queries[i];
        nearest(x, x.row(q), pool, k, exclude_self.then_some(q))
    }))
}

/// Exact Euclidean k-nearest neighbors of each query row among all rows,
/// nearest first, ties broken by lower index.
pub fn knn_indices(x: &FeatureMatrix, queries: &[usize], k: usize, exclude_self: bool) -> Result<Vec<Vec<usize>>> {
    let all: Vec<usize> = (0..x.len()).collect();
    knn_within(x, queries, &all, k, exclude_self)
}
