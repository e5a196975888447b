//! Data-parallel execution helpers.
//!
//! Inner loops (group rollout sampling, evaluation sampling, outcome
//! enumeration) are embarrassingly parallel across independent work
//! items that each own a derived rng stream, so parallel and sequential
//! execution produce identical results. The `parallel` feature (on by
//! default) routes [`map_indexed`] through rayon; without it the crate
//! has no rayon dependency and runs sequentially. The sequential path
//! stays available under either build for benchmarking.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
///
/// Dispatches to rayon when the `parallel` feature is enabled.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`map_indexed`]; always available so benchmarks
/// can compare both paths within one build.
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}
