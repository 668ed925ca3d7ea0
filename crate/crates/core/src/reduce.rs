//! Deterministic reductions.
//!
//! All floating-point sums that feed reported quantities go through a
//! pairwise (cascade) tree whose shape depends only on the number of terms.
//! Parallel work is split into fixed-size blocks whose partial sums are
//! combined with the same tree, so results do not depend on the worker count.

use rayon::prelude::*;
use rayon::ThreadPool;
use std::sync::Arc;

/// Number of leading terms summed serially before entering the tree.
const LEAF: usize = 8;

/// Pairwise summation of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Streaming pairwise accumulator.
///
/// Terms are grouped into leaves of `LEAF` values; completed leaves are merged
/// like a binary counter, so a sequence of `n` terms is reduced by a tree of
/// depth `O(log n)` without buffering the sequence.
#[derive(Debug, Clone, Default)]
pub struct PairwiseAccumulator {
    leaf: f64,
    leaf_len: usize,
    // levels[k] holds a partial sum of 2^k leaves, if occupied.
    levels: Vec<Option<f64>>,
}

impl PairwiseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        self.leaf += value;
        self.leaf_len += 1;
        if self.leaf_len == LEAF {
            let mut carry = self.leaf;
            self.leaf = 0.0;
            self.leaf_len = 0;
            for slot in self.levels.iter_mut() {
                match slot.take() {
                    Some(v) => carry += v,
                    None => {
                        *slot = Some(carry);
                        return;
                    }
                }
            }
            self.levels.push(Some(carry));
        }
    }

    pub fn sum(&self) -> f64 {
        let mut total = 0.0;
        for v in self.levels.iter().flatten() {
            total += v;
        }
        total + self.leaf
    }
}

/// Worker configuration for parallel evaluation.
///
/// `Workers::default()` runs on rayon's global pool; `Workers::new(n)` owns a
/// dedicated pool with `n` threads.
#[derive(Clone, Default)]
pub struct Workers {
    pool: Option<Arc<ThreadPool>>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.pool {
            Some(p) => write!(f, "Workers({})", p.current_num_threads()),
            None => write!(f, "Workers(global)"),
        }
    }
}

impl Workers {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("failed to build rayon thread pool");
        Self {
            pool: Some(Arc::new(pool)),
        }
    }

    pub fn threads(&self) -> usize {
        match &self.pool {
            Some(p) => p.current_num_threads(),
            None => rayon::current_num_threads(),
        }
    }

    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(op),
            None => op(),
        }
    }

    /// Maps `block` over `0..n_blocks` in parallel and returns the results in
    /// block order.
    pub fn map_blocks<T, F>(&self, n_blocks: usize, block: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.install(|| (0..n_blocks).into_par_iter().map(&block).collect())
    }

    /// Sums `term(i)` for `i in 0..n` with a fixed block decomposition and a
    /// pairwise tree over block partials.
    pub fn sum_indexed<F>(&self, n: usize, block_len: usize, term: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let block_len = block_len.max(1);
        let n_blocks = n.div_ceil(block_len);
        let partials = self.map_blocks(n_blocks, |b| {
            let mut acc = PairwiseAccumulator::new();
            for i in b * block_len..((b + 1) * block_len).min(n) {
                acc.add(term(i));
            }
            acc.sum()
        });
        pairwise_sum(&partials)
    }
}
