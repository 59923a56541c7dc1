//! Sequential and rayon-backed evaluation of independent points.
//!
//! Without the `parallel` feature every [`Execution`] runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
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

/// Smallest `m` in `lo..=hi` for which `hit` is true.
pub fn find_first<F>(exec: Execution, lo: u64, hi: u64, hit: F) -> Option<u64>
where
    F: Fn(u64) -> bool + Sync + Send,
{
    if lo > hi {
        return None;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (lo..=hi).into_par_iter().find_first(|&m| hit(m))
        }
        _ => (lo..=hi).find(|&m| hit(m)),
    }
}

/// Largest `m` in `lo..=hi` for which `hit` is true.
pub fn find_last<F>(exec: Execution, lo: u64, hi: u64, hit: F) -> Option<u64>
where
    F: Fn(u64) -> bool + Sync + Send,
{
    if lo > hi {
        return None;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (lo..=hi).into_par_iter().find_last(|&m| hit(m))
        }
        _ => (lo..=hi).rev().find(|&m| hit(m)),
    }
}

/// Maps every item, keeping input order in the output.
pub fn map_ordered<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
