//! Job execution: data-parallel with rayon when the `parallel` feature is
//! enabled (the default), plain sequential otherwise.
//!
//! Callers must not rely on execution order; results come back in input
//! order either way, and all randomness is derived from per-job seeds, so
//! output is identical for any worker count.

/// Map a closure over jobs, in parallel when built with the `parallel`
/// feature.
pub fn map_jobs<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Always-sequential twin of [`map_jobs`]. The benchmark suite compares the
/// two; production code goes through [`map_jobs`].
pub fn map_jobs_serial<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Run `f` on a dedicated pool of `n` workers (when parallel), or directly.
///
/// `None` uses the global pool. With the `parallel` feature disabled the
/// worker count is irrelevant and `f` simply runs on the caller's thread.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("building rayon pool")
                .install(f),
            None => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let sq = |x: u64| x * x;
        assert_eq!(map_jobs(items.clone(), sq), map_jobs_serial(items, sq));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let items: Vec<u64> = (0..256).collect();
        let f = |x: u64| x.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let one = with_workers(Some(1), || map_jobs(items.clone(), f));
        let many = with_workers(Some(8), || map_jobs(items.clone(), f));
        assert_eq!(one, many);
    }
}
