use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pairs::TargetOrder;
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};

pub const DEFAULT_EXHAUSTIVE_CAP: usize = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    Exhaustive,
    Sampled,
}

/// Parameters needed to rebuild a [`DiffIndex`] from the same training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub mode: IndexMode,
    /// Number of sampled differences (ignored when exhaustive).
    pub m: usize,
    pub seed: u64,
    /// Largest pair count allowed in exhaustive mode.
    pub cap: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            mode: IndexMode::Sampled,
            m: 2048,
            seed: 0,
            cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }
}

/// Training differences `x_b - x_a` over pairs with `y_a < y_b`.
///
/// Pairs are kept in canonical order: by `b` ascending, then by anchors `a`
/// in ascending (target, index) order. A sampled index is the first `m`
/// entries of a seeded random permutation of the canonical pairs, re-sorted
/// canonically, so a larger `m` with the same seed always yields a superset.
#[derive(Debug, Clone)]
pub struct DiffIndex {
    pub config: IndexConfig,
    /// `(a, b)` training indices.
    pub pairs: Vec<(usize, usize)>,
    /// `(len, d)` matrix of `x_b - x_a`.
    pub deltas: Array2<f64>,
}

impl DiffIndex {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn delta(&self, m: usize) -> &[f64] {
        self.deltas.row(m).to_slice().expect("standard layout")
    }
}

/// Maps canonical pair numbers to `(a, b)`.
struct PairNumbering {
    order: TargetOrder,
    /// `offsets[b]` = number of canonical pairs before target `b`.
    offsets: Vec<usize>,
    total: usize,
}

impl PairNumbering {
    fn new(y: &[f64]) -> Self {
        let order = TargetOrder::new(y);
        let mut offsets = Vec::with_capacity(y.len());
        let mut total = 0;
        for &c in &order.lower {
            offsets.push(total);
            total += c;
        }
        PairNumbering { order, offsets, total }
    }

    fn pair(&self, u: usize) -> (usize, usize) {
        // The last b with offset <= u always owns pair u: a target without
        // pairs shares its offset with the next target.
        let b = self.offsets.partition_point(|&o| o <= u) - 1;
        debug_assert!(self.order.lower[b] > u - self.offsets[b]);
        (self.order.by_target[u - self.offsets[b]], b)
    }
}

/// First `m` values of a seeded uniform permutation of `0..n`
/// (partial Fisher-Yates over a sparse swap map).
fn permutation_prefix(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(m.min(n));
    let mut out = Vec::with_capacity(m.min(n));
    for i in 0..m.min(n) {
        let j = rng.random_range(i..n);
        let vi = *swapped.get(&i).unwrap_or(&i);
        let vj = *swapped.get(&j).unwrap_or(&j);
        swapped.insert(j, vi);
        out.push(vj);
    }
    out
}

pub fn build_difference_index(train: &LabeledSet, config: IndexConfig) -> Result<DiffIndex> {
    let numbering = PairNumbering::new(&train.y);
    let total = numbering.total;
    let numbers: Vec<usize> = match config.mode {
        IndexMode::Exhaustive => {
            if total > config.cap {
                return Err(Error::IndexCap {
                    pairs: total,
                    cap: config.cap,
                });
            }
            (0..total).collect()
        }
        IndexMode::Sampled => {
            let mut drawn = permutation_prefix(total, config.m, config.seed);
            drawn.sort_unstable();
            drawn
        }
    };
    if numbers.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let pairs: Vec<(usize, usize)> = numbers.iter().map(|&u| numbering.pair(u)).collect();
    let d = train.dim();
    let mut deltas = Array2::zeros((pairs.len(), d));
    for (r, &(a, b)) in pairs.iter().enumerate() {
        let (xa, xb) = (train.x.row(a), train.x.row(b));
        for k in 0..d {
            deltas[[r, k]] = xb[k] - xa[k];
        }
    }
    Ok(DiffIndex {
        config,
        pairs,
        deltas,
    })
}
