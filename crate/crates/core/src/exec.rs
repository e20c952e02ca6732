//! Data-parallel execution with a sequential fallback.
//!
//! Work is always split into the same fixed batches, each batch seeded from
//! its own index, so `Sequential` and `Parallel` produce identical output.
//! Without the `parallel` feature, `Parallel` runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when work will actually be spread over a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Runs `f` inside a pool of `workers` threads; `None` uses the global pool.
pub fn with_workers<T, F>(workers: Option<usize>, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("could not build a {w}-thread pool, using the global one: {e}"),
        }
    }
    let _ = workers;
    f()
}

/// Splits `total` items into consecutive batches of at most `batch` items.
pub fn batches(total: usize, batch: usize) -> Vec<std::ops::Range<usize>> {
    let batch = batch.max(1);
    (0..total)
        .step_by(batch)
        .map(|start| start..(start + batch).min(total))
        .collect()
}
