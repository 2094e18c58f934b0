//! Execution policy for data-parallel loops.
//!
//! Every Monte-Carlo loop in the crate is written as an indexed map followed
//! by an ordered reduction, so results do not depend on how work is split
//! across threads. With the `parallel` feature disabled, [`Exec::Parallel`]
//! silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Maps `f` over `0..n` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Maps over fixed-size batches of `0..n` and folds each batch with
    /// `fold`; batch results come back in order. Batch boundaries depend only
    /// on `n` and `batch`, never on the thread count.
    pub fn map_batches<T, F>(self, n: usize, batch: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let batch = batch.max(1);
        let n_batches = n.div_ceil(batch);
        self.map(n_batches, |b| {
            let lo = b * batch;
            f(lo..(lo + batch).min(n))
        })
    }

    /// Whether the parallel backend is compiled in.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Runs `f` inside a dedicated pool of `workers` threads (or inline when the
/// parallel backend is unavailable or `workers` is `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}
