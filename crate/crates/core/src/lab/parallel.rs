//! Replica-parallel execution with results merged in replica order.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::Result;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PHI_LDP_THREADS";

#[derive(Clone, Default)]
pub struct Runner {
    pool: Option<Arc<ThreadPool>>,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner").field("threads", &self.threads()).finish()
    }
}

impl Runner {
    pub fn serial() -> Self {
        Self { pool: None }
    }

    pub fn with_threads(threads: usize) -> Self {
        if threads <= 1 {
            return Self::serial();
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Self {
            pool: Some(Arc::new(pool)),
        }
    }

    /// Honours `PHI_LDP_THREADS`; otherwise uses the available parallelism.
    pub fn from_env() -> Self {
        let cap = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok());
        let available = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self::with_threads(cap.unwrap_or(available).min(available.max(1)).max(1))
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// `f(0), ..., f(n - 1)` in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}
