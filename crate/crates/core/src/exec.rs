//! Order-preserving map over trajectory indices, parallel when the `parallel`
//! feature is enabled. Results always come back in index order, so any
//! reduction done by the caller is independent of the worker count.

/// Resolve a requested worker count; `0` means all available cores.
pub fn resolve_workers(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(feature = "parallel")]
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
}

#[cfg(feature = "parallel")]
impl Executor {
    pub fn new(workers: usize) -> Self {
        let workers = resolve_workers(workers);
        let pool = if workers > 1 {
            rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok()
        } else {
            None
        };
        Self { pool }
    }

    pub fn map<T, F>(&self, range: std::ops::Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        match &self.pool {
            Some(pool) => pool.install(|| range.into_par_iter().map(&f).collect()),
            None => range.map(f).collect(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub struct Executor;

#[cfg(not(feature = "parallel"))]
impl Executor {
    pub fn new(_workers: usize) -> Self {
        Executor
    }

    pub fn map<T, F>(&self, range: std::ops::Range<u64>, f: F) -> Vec<T>
    where
        F: Fn(u64) -> T,
    {
        range.map(f).collect()
    }
}
