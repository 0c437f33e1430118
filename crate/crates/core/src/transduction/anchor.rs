//! Nearest-difference anchor selection.
//!
//! For a query `q`, the anchor is the training point `x_i` and indexed
//! difference `d_m` minimizing `|(q - x_i) - d_m|`. The squared distance is
//! always reported as `sum_k ((q_k - x_ik) - d_mk)^2` evaluated in coordinate
//! order, and ties go to the smaller anchor index, then the smaller pair
//! index.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::index::DiffIndex;
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    /// Row of the anchor in the training set.
    pub anchor: usize,
    pub anchor_id: String,
    /// Position of the matched difference in the index.
    pub pair_index: usize,
    /// Training ids `(a, b)` of the matched difference `x_b - x_a`.
    pub pair_ids: (String, String),
    pub distance: f64,
    pub scaler_checksum: Option<Fingerprint>,
}

#[inline]
fn exact_sq_distance(q: &[f64], x: &[f64], d: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..q.len() {
        let r = (q[k] - x[k]) - d[k];
        s += r * r;
    }
    s
}

fn result(train: &LabeledSet, index: &DiffIndex, anchor: usize, m: usize, sq: f64) -> AnchorResult {
    let (a, b) = index.pairs[m];
    AnchorResult {
        anchor,
        anchor_id: train.ids[anchor].clone(),
        pair_index: m,
        pair_ids: (train.ids[a].clone(), train.ids[b].clone()),
        distance: sq.sqrt(),
        scaler_checksum: train.scaler_checksum.clone(),
    }
}

fn check(query: &[f64], train: &LabeledSet, index: &DiffIndex) -> Result<()> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if query.len() != train.dim() || index.deltas.ncols() != train.dim() {
        return Err(Error::Dimension {
            expected: train.dim(),
            got: query.len(),
        });
    }
    Ok(())
}

/// Full scan over every anchor and every indexed difference.
/// O(n * M * d) per query; this is the reference semantics.
pub fn select_anchor(query: &[f64], train: &LabeledSet, index: &DiffIndex) -> Result<AnchorResult> {
    check(query, train, index)?;
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..train.len() {
        let x = train.row(i);
        for m in 0..index.len() {
            let sq = exact_sq_distance(query, x, index.delta(m));
            if sq < best.0 {
                best = (sq, i, m);
            }
        }
    }
    Ok(result(train, index, best.1, best.2, best.0))
}

/// Anchor search with a precomputed table of `|x_i + d_m|^2`.
///
/// Each query then costs two matrix-vector products plus one pass over the
/// `n x M` table: `|q - (x_i + d_m)|^2 = |q|^2 - 2 q.x_i - 2 q.d_m + |x_i + d_m|^2`.
/// That expansion is only used to screen; every candidate within a rounding
/// bound of the screened minimum is re-evaluated with the exact coordinate
/// formula, so results are identical to [`select_anchor`].
pub struct AnchorSearcher<'a> {
    train: &'a LabeledSet,
    index: &'a DiffIndex,
    /// `(n, M)` squared norms of `x_i + d_m`.
    shifted_norms: Array2<f64>,
    max_train_norm: f64,
    max_delta_norm: f64,
}

impl<'a> AnchorSearcher<'a> {
    pub fn new(train: &'a LabeledSet, index: &'a DiffIndex) -> Result<Self> {
        check(&vec![0.0; train.dim()], train, index)?;
        let x_norms: Array1<f64> = train.x.rows().into_iter().map(|r| r.dot(&r)).collect();
        let d_norms: Array1<f64> = index.deltas.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mut shifted_norms = train.x.dot(&index.deltas.t());
        for (i, mut row) in shifted_norms.rows_mut().into_iter().enumerate() {
            for (m, v) in row.iter_mut().enumerate() {
                *v = x_norms[i] + 2.0 * *v + d_norms[m];
            }
        }
        Ok(AnchorSearcher {
            train,
            index,
            shifted_norms,
            max_train_norm: x_norms.iter().copied().fold(0.0, f64::max).sqrt(),
            max_delta_norm: d_norms.iter().copied().fold(0.0, f64::max).sqrt(),
        })
    }

    pub fn train(&self) -> &LabeledSet {
        self.train
    }

    pub fn index(&self) -> &DiffIndex {
        self.index
    }

    pub fn select(&self, query: &[f64]) -> Result<AnchorResult> {
        check(query, self.train, self.index)?;
        let q = ArrayView1::from(query);
        let qq = q.dot(&q);
        let s = self.train.x.dot(&q);
        let t = self.index.deltas.dot(&q);

        let mut min = f64::INFINITY;
        for (i, row) in self.shifted_norms.rows().into_iter().enumerate() {
            let base = qq - 2.0 * s[i];
            for (m, &nm) in row.iter().enumerate() {
                let approx = base - 2.0 * t[m] + nm;
                if approx < min {
                    min = approx;
                }
            }
        }

        // Loose forward-error bound on both the expanded and the exact sums.
        let scale = qq.sqrt() + self.max_train_norm + self.max_delta_norm;
        let tol = 16.0 * (self.train.dim() as f64 + 8.0) * f64::EPSILON * scale * scale;
        let threshold = min + 4.0 * tol;

        let mut best = (f64::INFINITY, 0, 0);
        for (i, row) in self.shifted_norms.rows().into_iter().enumerate() {
            let base = qq - 2.0 * s[i];
            for (m, &nm) in row.iter().enumerate() {
                if base - 2.0 * t[m] + nm <= threshold {
                    let sq = exact_sq_distance(query, self.train.row(i), self.index.delta(m));
                    if sq < best.0 {
                        best = (sq, i, m);
                    }
                }
            }
        }
        Ok(result(self.train, self.index, best.1, best.2, best.0))
    }

    /// Anchors for every row of `queries`, in row order.
    pub fn select_all(&self, queries: &Array2<f64>, exec: Execution) -> Result<Vec<AnchorResult>> {
        exec.try_map_range(queries.nrows(), |r| {
            self.select(queries.row(r).to_slice().expect("standard layout"))
        })
    }
}
