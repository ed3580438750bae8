use liebridge_core::exec::Executor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_ENV: &str = "LIEBRIDGE_THREADS";

/// Rayon-backed executor. Results come back in index order, so output does
/// not depend on the thread count.
pub struct Parallel {
    pool: ThreadPool,
}

impl Parallel {
    pub fn new(threads: usize) -> Self {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        Self { pool }
    }

    /// Thread count from `LIEBRIDGE_THREADS`, else rayon's default.
    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_index_order() {
        let out = Parallel::new(3).map(1000, |i| i * i);
        assert!(out.iter().enumerate().all(|(i, v)| *v == i * i));
    }
}
