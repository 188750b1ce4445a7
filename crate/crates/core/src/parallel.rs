//! Data-parallel map helpers with a sequential fallback.
//!
//! With the default `parallel` feature the indexed map fans out on the
//! rayon pool; without it the same API runs sequentially. Callers must
//! reduce the returned vector in index order, which keeps results
//! bit-identical across both lanes and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference lane, available regardless of features.
///
/// The criterion bench compares this against [`indexed_map`]; tests use
/// it to assert the two lanes agree byte-for-byte.
pub fn indexed_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool size. Returns false if the pool was
/// already built (rayon allows one global pool per process).
#[cfg(feature = "parallel")]
pub fn configure_jobs(jobs: usize) -> bool {
    if jobs == 0 {
        return true;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn configure_jobs(_jobs: usize) -> bool {
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanes_agree() {
        let f = |i: usize| (i as f64).sin() * 1e6;
        assert_eq!(indexed_map(1000, f), indexed_map_seq(1000, f));
    }
}
