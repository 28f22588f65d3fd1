//! Deterministic data-parallel helpers.
//!
//! Parallelism is only ever applied across disjoint output slices (images,
//! episodes), with each slice computed by a sequential kernel, so results
//! are bit-identical regardless of thread count. Without the `std` feature
//! everything runs sequentially.

use alloc::vec::Vec;

#[cfg(feature = "std")]
use rayon::prelude::*;

/// Applies `f(chunk_index, chunk)` over consecutive `chunk_len` slices of `data`.
pub(crate) fn for_each_chunk_mut<F>(data: &mut [f32], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    debug_assert!(chunk_len > 0 && data.len() % chunk_len == 0);
    #[cfg(feature = "std")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
    }
    #[cfg(not(feature = "std"))]
    {
        for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
    }
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "std")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps a fallible `f` over `0..n`, preserving index order.
pub(crate) fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "std")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}
