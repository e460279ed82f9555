//! Optional cell-parallel execution, capped by `NUM_THREADS` (default 1).

use std::sync::OnceLock;

pub fn num_threads() -> usize {
    static THREADS: OnceLock<usize> = OnceLock::new();
    *THREADS.get_or_init(|| {
        std::env::var("NUM_THREADS")
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or(1)
    })
}

fn pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = num_threads();
        (n > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool")
        })
    })
    .as_ref()
}

/// Computes `compute(i)` for `i in 0..n` and feeds the results to `merge` in
/// index order, so reductions are deterministic regardless of thread count.
pub fn map_reduce_ordered<T, C, M>(n: usize, compute: C, mut merge: M)
where
    T: Send,
    C: Fn(usize) -> T + Sync + Send,
    M: FnMut(usize, T),
{
    match pool() {
        None => {
            for i in 0..n {
                merge(i, compute(i));
            }
        }
        Some(pool) => {
            use rayon::prelude::*;
            const CHUNK: usize = 4096;
            let mut start = 0;
            while start < n {
                let end = (start + CHUNK * pool.current_num_threads()).min(n);
                let out: Vec<T> =
                    pool.install(|| (start..end).into_par_iter().map(&compute).collect());
                for (k, t) in out.into_iter().enumerate() {
                    merge(start + k, t);
                }
                start = end;
            }
        }
    }
}
