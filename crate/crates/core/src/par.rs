//! Data-parallel map over index ranges.
//!
//! With the `parallel` feature the work is spread over a rayon pool;
//! without it every variant runs sequentially. Results are always returned
//! in index order, so the output never depends on scheduling.

/// How many threads to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// The global rayon pool.
    #[default]
    Auto,
    /// A dedicated pool with this many threads.
    Workers(usize),
}

impl Parallelism {
    /// `0` means auto, `1` sequential.
    pub fn from_workers(n: usize) -> Self {
        match n {
            0 => Parallelism::Auto,
            1 => Parallelism::Sequential,
            n => Parallelism::Workers(n),
        }
    }
}

/// `(0..n).map(f)` collected in order.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, par: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match par {
        Parallelism::Sequential => (0..n).map(f).collect(),
        Parallelism::Auto => (0..n).into_par_iter().map(f).collect(),
        Parallelism::Workers(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        },
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, _par: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// True when `f` holds on every index of `0..n`. May stop early.
#[cfg(feature = "parallel")]
pub fn all_range<F>(n: usize, par: Parallelism, f: F) -> bool
where
    F: Fn(usize) -> bool + Sync + Send,
{
    use rayon::prelude::*;
    match par {
        Parallelism::Sequential => (0..n).all(f),
        Parallelism::Auto => (0..n).into_par_iter().all(f),
        Parallelism::Workers(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().all(&f)),
            Err(_) => (0..n).all(f),
        },
    }
}

#[cfg(not(feature = "parallel"))]
pub fn all_range<F>(n: usize, _par: Parallelism, f: F) -> bool
where
    F: Fn(usize) -> bool + Sync + Send,
{
    (0..n).all(f)
}
