//! Order-preserving data parallelism.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every mode runs sequentially on the calling thread. Results
//! always come back in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Sequential,
    /// Up to this many items in flight at once.
    Parallel(usize),
}

impl Default for ExecutionMode {
    fn default() -> Self {
        ExecutionMode::Parallel(4)
    }
}

impl ExecutionMode {
    pub fn from_parallelism(n: usize) -> Self {
        if n <= 1 {
            ExecutionMode::Sequential
        } else {
            ExecutionMode::Parallel(n)
        }
    }

    /// Worker count that will actually be used.
    pub fn effective_workers(self) -> usize {
        match self {
            ExecutionMode::Parallel(n) if cfg!(feature = "parallel") => n.max(1),
            _ => 1,
        }
    }
}

/// Maps `f` over `items`, returning results in input order.
pub fn map_ordered<T, R, F>(mode: ExecutionMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let workers = mode.effective_workers();
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    parallel_map(workers, items, f)
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    // Already on a pool: share it rather than nesting a fresh one.
    if rayon::current_thread_index().is_some() {
        return items.par_iter().map(f).collect();
    }
    match pool(workers) {
        Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        None => items.iter().map(f).collect(),
    }
}

/// One pool per worker count, built on first use and kept for the process.
#[cfg(feature = "parallel")]
fn pool(workers: usize) -> Option<std::sync::Arc<rayon::ThreadPool>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Mutex::default).lock().unwrap_or_else(|p| p.into_inner());
    if let Some(pool) = pools.get(&workers) {
        return Some(pool.clone());
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).thread_name(|i| format!("athena-par-{i}")).build() {
        Ok(pool) => Some(pools.entry(workers).or_insert(Arc::new(pool)).clone()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            None
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(_workers: usize, items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
