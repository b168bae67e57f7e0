//! Scenario- and node-level parallelism, capped by `SYSRISK_THREADS`.

use std::sync::OnceLock;

pub const THREADS_ENV: &str = "SYSRISK_THREADS";

fn pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n: usize = std::env::var(THREADS_ENV).ok()?.trim().parse().ok()?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()
    })
    .as_ref()
}

/// Runs `f` on the capped pool when `SYSRISK_THREADS` is set, otherwise on
/// rayon's global pool. Results of parallel iterators keep their order, so
/// output does not depend on the thread count.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match pool() {
        Some(p) => p.install(f),
        None => f(),
    }
}
