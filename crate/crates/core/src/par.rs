//! Execution policy for the data-parallel loops.
//!
//! `Execution::Parallel` fans work out over rayon when the `parallel` feature
//! is compiled in and silently degrades to sequential otherwise. Work items
//! are indexed and results are collected in index order, so both policies
//! return identical values.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Parallel iff the `parallel` feature is enabled and more than one worker
    /// is available.
    pub fn auto() -> Self {
        if cfg!(feature = "parallel") && workers() > 1 {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f)` collected in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fallible variant of [`Execution::map`]; returns the first error by index.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

/// Number of worker threads the parallel policy would use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Sum equal-length vectors in a fixed chunked order. Used for gradient
/// reductions so that the result does not depend on the execution policy.
pub fn chunked_sum<F>(exec: Execution, n_items: usize, chunk: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n_items.div_ceil(chunk);
    let partials = exec.map(n_chunks, |c| {
        let mut acc = vec![0.0; len];
        for i in c * chunk..((c + 1) * chunk).min(n_items) {
            f(i, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
