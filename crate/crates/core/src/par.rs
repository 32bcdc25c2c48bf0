//! Data-parallel helpers. With the `parallel` feature these fan out over the
//! rayon global pool; without it they run the same closures sequentially.
//! Every helper preserves input order in its output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Indices in `0..n` for which `keep` holds, ascending.
pub fn filter_range<F>(n: u64, keep: F) -> Vec<u64>
where
    F: Fn(u64) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().filter(|&i| keep(i)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).filter(|&i| keep(i)).collect()
    }
}

pub fn count_range<F>(n: u64, keep: F) -> u64
where
    F: Fn(u64) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().filter(|&i| keep(i)).count() as u64
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).filter(|&i| keep(i)).count() as u64
    }
}

/// Bitwise OR of `f(i)` over every `i` in `0..n` where `f` returns `Some`.
pub fn or_range<F>(n: u64, f: F) -> u64
where
    F: Fn(u64) -> Option<u64> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .filter_map(&f)
            .reduce(|| 0, |a, b| a | b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).filter_map(&f).fold(0, |a, b| a | b)
    }
}

pub fn any<T, F>(items: &[T], pred: F) -> bool
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().any(pred)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().any(pred)
    }
}
