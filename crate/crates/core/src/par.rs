//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon;
//! without it they run the same closures in order. Work is always split into
//! fixed-size pieces that do not depend on the thread count, and partial
//! results are combined in index order, so both paths give bit-identical
//! output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of batch samples whose parameter-gradient contributions are summed
/// into one partial buffer before the ordered reduction.
pub const GRAD_CHUNK: usize = 16;

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is index order.
pub fn map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Calls `f(i, chunk)` for each consecutive `size`-element chunk of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], size: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let size = size.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Sums per-chunk partial vectors of length `len` produced by `partial(start, end)`
/// over `[0, n)` split into `GRAD_CHUNK`-sized ranges. Reduction order is fixed.
pub fn chunked_sum<F>(n: usize, len: usize, partial: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> Vec<f64> + Sync + Send,
{
    let chunks = n.div_ceil(GRAD_CHUNK);
    let parts = map(chunks, |c| {
        let start = c * GRAD_CHUNK;
        partial(start, (start + GRAD_CHUNK).min(n))
    });
    let mut total = vec![0.0; len];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Like [`chunked_sum`], but each chunk also returns a per-sample output block
/// (e.g. input gradients for samples `start..end`); blocks are concatenated in
/// order.
pub fn chunked_sum_and_concat<F>(n: usize, len: usize, partial: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, usize) -> (Vec<f64>, Vec<f64>) + Sync + Send,
{
    let chunks = n.div_ceil(GRAD_CHUNK);
    let parts = map(chunks, |c| {
        let start = c * GRAD_CHUNK;
        partial(start, (start + GRAD_CHUNK).min(n))
    });
    let mut total = vec![0.0; len];
    let mut blocks = Vec::new();
    for (p, block) in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
        blocks.extend(block);
    }
    (total, blocks)
}
