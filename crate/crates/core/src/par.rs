//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the closures run on the rayon pool; without it
//! (or when `parallel == false`) they run in order on the calling thread.
//! Results are always returned in input order.

pub fn map_collect<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Sum of `f(i)` over `0..n`.
pub fn sum_range<F>(n: usize, parallel: bool, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        // Fixed chunking keeps the summation order independent of scheduling.
        const CHUNK: usize = 64;
        let chunks = n.div_ceil(CHUNK);
        let partial: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
            .collect();
        return partial.iter().sum();
    }
    let _ = parallel;
    const CHUNK: usize = 64;
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum::<f64>())
        .sum()
}

/// Whether the crate was built with rayon support.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
