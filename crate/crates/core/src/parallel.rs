//! Chunked parallel helpers with thread-count independent reductions.
//!
//! Work is split into fixed-size index ranges. Each range is processed
//! sequentially, and the per-range partial results are returned in range
//! order, so any fold over them is identical whatever the pool size.

use rayon::prelude::*;
use std::ops::Range;

/// Default number of samples per work unit.
pub const CHUNK: usize = 2048;

pub(crate) fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| f(c * chunk..((c + 1) * chunk).min(n)))
        .collect()
}

/// Pairwise sum of a slice; deterministic for a given input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
