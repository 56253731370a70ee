//! Execution strategy for data-parallel loops.
//!
//! All parallel maps preserve input order, and every reduction over their
//! outputs happens afterwards in a fixed order, so `Sequential` and
//! `Parallel` produce bit-identical results.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing when the `parallel` feature is on; otherwise the
    /// same as `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
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
}

impl Execution {
    /// Runs two closures, concurrently when parallel.
    pub fn join<A, B, RA, RB>(self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => rayon::join(a, b),
            _ => (a(), b()),
        }
    }
}

/// Sums equal-length vectors with a fixed tree, independent of how the inputs
/// were produced.
///
/// The left subtree always holds the largest power of two strictly below
/// `n` inputs. Summing aligned blocks of `2^k` inputs first and then
/// combining the block sums with this function therefore gives the same
/// bits as one call over all inputs.
pub fn pairwise_sum(vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    match vectors.len() {
        0 => vec![0.0; dim],
        1 => vectors[0].clone(),
        n => {
            let split = if n.is_power_of_two() { n / 2 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
            let (left, right) = vectors.split_at(split);
            let mut acc = pairwise_sum(left, dim);
            let r = pairwise_sum(right, dim);
            for (a, b) in acc.iter_mut().zip(&r) {
                *a += b;
            }
            acc
        }
    }
}
