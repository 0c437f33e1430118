use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};

/// How training pairs are drawn each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    /// For every target point, this many anchors drawn uniformly (with
    /// replacement) from the points with strictly smaller target.
    PerTarget(usize),
    /// Every ordered pair with `y_anchor < y_target`.
    All,
}

/// Training indices ordered by (target, index) plus, for every point, how many
/// points have a strictly smaller target. The anchors of point `i` are exactly
/// `by_target[..lower[i]]`.
#[derive(Debug, Clone)]
pub(crate) struct TargetOrder {
    pub by_target: Vec<usize>,
    pub lower: Vec<usize>,
}

impl TargetOrder {
    pub fn new(y: &[f64]) -> Self {
        let mut by_target: Vec<usize> = (0..y.len()).collect();
        by_target.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        let mut lower = vec![0; y.len()];
        let mut start = 0;
        for k in 0..by_target.len() {
            if y[by_target[k]] > y[by_target[start]] {
                start = k;
            }
            lower[by_target[k]] = start;
        }
        TargetOrder { by_target, lower }
    }

    pub fn n_pairs(&self) -> usize {
        self.lower.iter().sum()
    }
}

/// Per-epoch source of `(anchor, target)` index pairs.
#[derive(Debug, Clone)]
pub struct PairSampler {
    order: TargetOrder,
    sampling: PairSampling,
    rng: ChaCha8Rng,
}

impl PairSampler {
    pub fn new(y: &[f64], sampling: PairSampling, seed: u64) -> Result<Self> {
        let order = TargetOrder::new(y);
        if order.n_pairs() == 0 {
            return Err(Error::NoPairs);
        }
        if sampling == PairSampling::PerTarget(0) {
            return Err(Error::InvalidArgument("per_target_pairs must be positive".into()));
        }
        Ok(PairSampler {
            order,
            sampling,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Number of pairs yielded per epoch.
    pub fn pairs_per_epoch(&self) -> usize {
        match self.sampling {
            PairSampling::All => self.order.n_pairs(),
            PairSampling::PerTarget(k) => k * self.order.lower.iter().filter(|&&c| c > 0).count(),
        }
    }

    /// Pairs for the next epoch, grouped by target index in ascending order.
    pub fn epoch(&mut self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.pairs_per_epoch());
        for (target, &count) in self.order.lower.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let anchors = &self.order.by_target[..count];
            match self.sampling {
                PairSampling::All => out.extend(anchors.iter().map(|&a| (a, target))),
                PairSampling::PerTarget(k) => {
                    for _ in 0..k {
                        out.push((anchors[self.rng.random_range(0..count)], target));
                    }
                }
            }
        }
        out
    }

    /// Epoch pairs in a seeded random order, ready for mini-batching.
    pub fn shuffled_epoch(&mut self) -> Vec<(usize, usize)> {
        let mut pairs = self.epoch();
        pairs.shuffle(&mut self.rng);
        pairs
    }
}

/// Materialized pairs with their feature differences `x_target - x_anchor`.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize)>,
    pub delta: Array2<f64>,
    pub anchors: Array2<f64>,
}

impl PairBatch {
    /// Fails if any pair violates `y_anchor < y_target`.
    pub fn new(train: &LabeledSet, pairs: &[(usize, usize)]) -> Result<Self> {
        let d = train.dim();
        let mut delta = Array2::zeros((pairs.len(), d));
        let mut anchors = Array2::zeros((pairs.len(), d));
        for (r, &(a, t)) in pairs.iter().enumerate() {
            if !(train.y[a] < train.y[t]) {
                return Err(Error::InvalidArgument(format!(
                    "illegal pair: anchor `{}` (y={}) is not below target `{}` (y={})",
                    train.ids[a], train.y[a], train.ids[t], train.y[t]
                )));
            }
            let xa = train.x.row(a);
            let xt = train.x.row(t);
            for k in 0..d {
                delta[[r, k]] = xt[k] - xa[k];
            }
            anchors.row_mut(r).assign(&xa);
        }
        Ok(PairBatch {
            pairs: pairs.to_vec(),
            delta,
            anchors,
        })
    }
}

/// Convenience wrapper: a sampler over the training targets.
pub fn build_pairs(train: &LabeledSet, sampling: PairSampling, seed: u64) -> Result<PairSampler> {
    PairSampler::new(&train.y, sampling, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn exhaustive_three_points() {
        let mut s = PairSampler::new(&[1.0, 2.0, 3.0], PairSampling::All, 0).unwrap();
        let got: BTreeSet<_> = s.epoch().into_iter().collect();
        assert_eq!(got, BTreeSet::from([(0, 1), (0, 2), (1, 2)]));
    }

    #[test]
    fn ties_are_excluded() {
        let mut s = PairSampler::new(&[5.0, 5.0, 7.0], PairSampling::All, 0).unwrap();
        let got: BTreeSet<_> = s.epoch().into_iter().collect();
        assert_eq!(got, BTreeSet::from([(0, 2), (1, 2)]));
    }

    #[test]
    fn constant_targets_have_no_pairs() {
        assert!(matches!(PairSampler::new(&[2.0; 4], PairSampling::All, 0), Err(Error::NoPairs)));
    }

    #[test]
    fn per_target_counts_and_legality() {
        let y: Vec<f64> = (0..100).map(|i| ((i * 37) % 50) as f64).collect();
        let with_lower = y.iter().filter(|&&v| y.iter().any(|&u| u < v)).count();
        let mut s = PairSampler::new(&y, PairSampling::PerTarget(4), 3).unwrap();
        let e1 = s.epoch();
        assert_eq!(e1.len(), 4 * with_lower);
        assert!(e1.iter().all(|&(a, t)| y[a] < y[t]));
        let e2 = s.epoch();
        assert_ne!(e1, e2);
        let mut again = PairSampler::new(&y, PairSampling::PerTarget(4), 3).unwrap();
        assert_eq!(again.epoch(), e1);
    }
}
