//! Worker pool shared by the parallel parts of the crate.
//!
//! `STGT_THREADS` caps the number of workers; unset or `0` lets rayon decide.

use std::sync::OnceLock;

use rayon::ThreadPool;

pub const THREADS_ENV: &str = "STGT_THREADS";

static POOL: OnceLock<ThreadPool> = OnceLock::new();

fn configured_threads() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0)
}

pub fn pool() -> &'static ThreadPool {
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(configured_threads())
            .thread_name(|i| format!("stgt-worker-{i}"))
            .build()
            .expect("failed to start worker pool")
    })
}

/// Runs `f` inside the shared pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    pool().install(f)
}
