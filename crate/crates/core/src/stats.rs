//! Seeded substreams and delete-one-block jackknife.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Number of jackknife blocks used throughout the crate.
pub const JACKKNIFE_BLOCKS: usize = 100;

/// Default number of independent RNG substreams (work partitions). Part of
/// the reproducibility contract: changing it changes the sampled values.
pub const DEFAULT_PARTITIONS: usize = 16;

/// Independent generator for partition `stream` of a seeded computation.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Half-open index range of part `part` when `n` items are cut into `parts`
/// contiguous pieces.
pub fn partition_range(n: usize, parts: usize, part: usize) -> std::ops::Range<usize> {
    let lo = (n as u128 * part as u128 / parts as u128) as usize;
    let hi = (n as u128 * (part as u128 + 1) / parts as u128) as usize;
    lo..hi
}

/// Per-block sums of a fixed-width vector of per-sample statistics.
#[derive(Debug, Clone)]
pub struct BlockSums {
    width: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl BlockSums {
    /// Splits `n` samples into `min(blocks, n)` contiguous blocks and sums the
    /// statistics written by `stat(i, out)` within each. Blocks are reduced in
    /// parallel but each block is summed in index order, so the result does not
    /// depend on the thread count.
    pub fn accumulate<F>(n: usize, blocks: usize, width: usize, stat: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let blocks = blocks.min(n).max(1);
        let per_block: Vec<(Vec<f64>, usize)> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let range = partition_range(n, blocks, b);
                let mut sum = vec![0.0; width];
                let mut buf = vec![0.0; width];
                let count = range.len();
                for i in range {
                    stat(i, &mut buf);
                    for (s, v) in sum.iter_mut().zip(&buf) {
                        *s += v;
                    }
                }
                (sum, count)
            })
            .collect();
        let (sums, counts) = per_block.into_iter().unzip();
        BlockSums { width, sums, counts }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_blocks(&self) -> usize {
        self.sums.len()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    fn totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.width];
        for s in &self.sums {
            for (acc, v) in t.iter_mut().zip(s) {
                *acc += v;
            }
        }
        t
    }

    /// Sample means of every statistic.
    pub fn means(&self) -> Vec<f64> {
        let n = self.total_count() as f64;
        self.totals().into_iter().map(|t| t / n).collect()
    }

    /// Applies `f` to the full-sample means and estimates its standard error by
    /// leaving out one block at a time. The error is NaN with fewer than two blocks.
    pub fn jackknife<F>(&self, f: F) -> Estimate
    where
        F: Fn(&[f64]) -> f64,
    {
        let totals = self.totals();
        let n = self.total_count();
        let value = f(&self.means());
        let b = self.num_blocks();
        if b < 2 {
            return Estimate {
                value,
                standard_error: f64::NAN,
            };
        }
        let mut loo = Vec::with_capacity(b);
        let mut means = vec![0.0; self.width];
        for (sum, &count) in self.sums.iter().zip(&self.counts) {
            let rest = (n - count) as f64;
            for ((m, t), s) in means.iter_mut().zip(&totals).zip(sum) {
                *m = (t - s) / rest;
            }
            loo.push(f(&means));
        }
        let mean_loo = loo.iter().sum::<f64>() / b as f64;
        let ss: f64 = loo.iter().map(|v| (v - mean_loo) * (v - mean_loo)).sum();
        Estimate {
            value,
            standard_error: ((b as f64 - 1.0) / b as f64 * ss).sqrt(),
        }
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}
