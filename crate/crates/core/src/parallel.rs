//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature, items are spread over a rayon pool of the
//! requested size; otherwise (or with one worker) they run in order on the
//! calling thread. Results always come back in input order, so outputs do not
//! depend on the worker count.

/// Number of workers meaning "let the runtime decide".
pub const AUTO_WORKERS: usize = 0;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let run = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    if workers == AUTO_WORKERS {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// [`map_indexed`] over `0..n`.
pub fn map_range<R, F>(n: usize, workers: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map_indexed(&idx, workers, |_, &i| f(i))
}

/// Collects a vector of results, failing on the first error in input order.
pub fn collect_results<R, E>(results: Vec<Result<R, E>>) -> Result<Vec<R>, E> {
    results.into_iter().collect()
}
