//! Data-parallel helpers with a sequential fallback.
//!
//! Every entry point here comes in two flavors: the plain name dispatches to
//! rayon when the `parallel` feature is enabled (the default) and falls back
//! to a straight loop otherwise, while the `_seq` variant is always the
//! straight loop. Keeping the sequential path callable even in parallel
//! builds lets the benchmark suite compare the two on identical workloads,
//! and gives callers a deterministic-order escape hatch for debugging.
//!
//! The closures must be `Sync + Send` so the same call site compiles under
//! both configurations; in a sequential build those bounds are simply unused.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
///
/// Parallel when the `parallel` feature is on; the output order is the same
/// either way.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`map_indexed`].
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Applies `f(index, element)` to every slice element in place.
///
/// Used for amplitude-wise updates on state vectors, where `index` doubles as
/// the computational-basis label.
pub fn for_each_indexed_mut<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_each_indexed_mut_seq(data, f)
    }
}

/// Sequential twin of [`for_each_indexed_mut`].
pub fn for_each_indexed_mut_seq<T, F>(data: &mut [T], f: F)
where
    F: Fn(usize, &mut T),
{
    for (i, x) in data.iter_mut().enumerate() {
        f(i, x);
    }
}
