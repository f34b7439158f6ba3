//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the crate (layer solves, penalty sweeps, path blocks,
//! probe blocks) funnels through these two functions. With the `parallel`
//! feature (default) they dispatch to rayon; without it they are plain
//! iterator loops. Results are collected in index order either way, so output
//! bytes never depend on thread count or scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the rayon dispatch overhead outweighs the work.
const PAR_MIN_LEN: usize = 64;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    if n >= PAR_MIN_LEN {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Like `map_indexed` but for fallible work; the first error wins.
#[cfg(feature = "parallel")]
pub(crate) fn try_map_indexed<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> Result<U, E> + Sync + Send,
{
    if n >= PAR_MIN_LEN {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_indexed<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    F: Fn(usize) -> Result<U, E>,
{
    (0..n).map(f).collect()
}
