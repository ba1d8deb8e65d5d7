//! Index-ordered fan-out over independent work items.
//!
//! With the `parallel` feature the items run on the ambient rayon pool;
//! without it they run in order on the calling thread. Results are always
//! returned in index order.

/// Maps `f` over `0..len` and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_sequential(len, f)
}

/// The sequential path, available regardless of features.
pub fn map_indexed_sequential<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// `true` when work items fan out over rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
