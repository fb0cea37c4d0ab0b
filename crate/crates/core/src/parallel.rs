//! Path-parallel map with ordered collection.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Monte Carlo run settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Worker-thread hint; never changes results.
    pub threads: Option<usize>,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            threads: None,
        }
    }

    pub fn with_threads(self, threads: Option<usize>) -> Self {
        Self { threads, ..self }
    }

    /// Runs `f(seed, path)` for every path.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, u64) -> Result<T> + Sync + Send,
    {
        if self.n_paths == 0 {
            return Err(Error::Argument("path count must be positive".into()));
        }
        let seed = self.seed;
        map_paths(self.n_paths, self.threads, move |p| f(seed, p))
    }
}

/// Evaluates `f(0..n)` in parallel and returns results in index order.
///
/// `threads` of `None` uses the global pool; the thread count never affects
/// the output because every item is a pure function of its index.
pub fn map_paths<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let run = || (0..n as u64).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match threads {
        None => run(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
    }
}
