//! Execution policy for per-sample loops.
//!
//! Work is split into fixed-size chunks whose boundaries depend only on the
//! problem size. Each chunk is reduced sequentially and the chunk results are
//! combined in index order, so the floating-point summation order is the same
//! for [`Execution::Sequential`], [`Execution::Parallel`] and every rayon
//! thread count.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Samples per reduction chunk. Changing this changes the last bits of every
/// Monte-Carlo estimate, so it is fixed rather than tuned per machine.
pub const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Uses the current rayon pool. Falls back to sequential when the crate
    /// is built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Like [`Execution::map`] but stops at the lowest-index error.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        // Collecting into Result keeps the first error in index order for
        // both rayon and the sequential iterator.
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                let all: Vec<Result<T, E>> = (0..n).into_par_iter().map(f).collect();
                all.into_iter().collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Reduces `0..n` chunk by chunk. `chunk_fn` folds one contiguous range
    /// sequentially; partial results are then merged in chunk order.
    pub fn fold_chunks<T, E, F, M>(self, n: usize, chunk_fn: F, mut merge: M) -> Result<Option<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(Range<usize>) -> Result<T, E> + Sync + Send,
        M: FnMut(&mut T, T),
    {
        let n_chunks = n.div_ceil(CHUNK);
        let parts = self.try_map(n_chunks, |c| {
            let start = c * CHUNK;
            chunk_fn(start..(start + CHUNK).min(n))
        })?;
        let mut parts = parts.into_iter();
        let Some(mut acc) = parts.next() else {
            return Ok(None);
        };
        for p in parts {
            merge(&mut acc, p);
        }
        Ok(Some(acc))
    }
}
