//! Order-preserving parallel map over replicate indices.
//!
//! Work units carry their own derived seeds, so results depend only on the
//! unit index and never on how rayon schedules the units.

use rayon::prelude::*;

/// Maps `f` over `0..n` in parallel; results come back in index order.
/// The first error by index wins.
pub fn map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let results: Vec<Result<T, E>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Sets the size of the global worker pool. Only the first call has effect.
pub fn set_workers(workers: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .is_ok()
}

/// Runs `f` inside a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}
