//! Dispatch between rayon data-parallel iteration and a sequential fallback.
//!
//! Built with the `parallel` feature (the default), hot loops fan out over
//! rayon; without it the same code runs sequentially. Either way the output
//! ordering is identical, so results are byte-for-byte reproducible.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
pub(crate) fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice, preserving element order in the output.
pub fn map_slice<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> U + Send + Sync,
) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` inside a worker pool of `threads` threads when a bound is given
/// and the `parallel` feature is enabled; otherwise runs `f` directly.
pub fn run_with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> T {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("worker pool construction cannot fail for n > 0")
                .install(f),
            _ => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let out = map_indexed(100, |i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn run_with_threads_bounds_pool() {
        let sum: u64 = run_with_threads(Some(1), || (0..1000u64).sum());
        assert_eq!(sum, 499_500);
        let sum: u64 = run_with_threads(None, || (0..1000u64).sum());
        assert_eq!(sum, 499_500);
    }
}
