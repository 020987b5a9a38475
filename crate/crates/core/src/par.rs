//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) batch work runs on the rayon pool;
//! without it everything runs on the calling thread. Callers that want to
//! compare both can pick an [`Execution`] explicitly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], execution: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
    }
}

/// Runs `f` inside a pool capped at `threads` workers (ignored when sequential).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|n| *n > 0) {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    f()
}
