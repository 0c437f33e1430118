//! Column scaling fitted on training rows only.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    /// Per-column z-score, then each row rescaled to unit L2 norm.
    StandardNormalize,
    /// Per-column `(x - min) / (max - min)`, NaN replaced by `nan_fill`.
    MinMax,
    /// Pass-through (NaN still replaced by `nan_fill`).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnStatus {
    Retained,
    /// Zero variance on the training rows; always maps to 0.
    Constant,
    /// No finite training value; always maps to `nan_fill`.
    AllNan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    /// Mean (standard) or minimum (min-max).
    pub center: f64,
    /// Population standard deviation (standard) or `max - min` (min-max).
    pub spread: f64,
    pub status: ColumnStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub kind: ScalerKind,
    pub columns: Vec<ColumnStats>,
    pub nan_fill: f64,
}

impl ScalerState {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn checksum(&self) -> Fingerprint {
        Fingerprint::of_json(self).expect("scaler state serializes")
    }
}

/// Default NaN replacement: −1 for min-max, 0 (the column mean) for z-scores.
pub fn default_nan_fill(kind: ScalerKind) -> f64 {
    match kind {
        ScalerKind::MinMax => -1.0,
        ScalerKind::StandardNormalize | ScalerKind::None => 0.0,
    }
}

pub fn fit_scaler(x: ArrayView2<'_, f64>, kind: ScalerKind) -> ScalerState {
    fit_scaler_with_fill(x, kind, default_nan_fill(kind))
}

pub fn fit_scaler_with_fill(x: ArrayView2<'_, f64>, kind: ScalerKind, nan_fill: f64) -> ScalerState {
    let columns = x
        .axis_iter(Axis(1))
        .map(|col| {
            let finite: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            if finite.is_empty() {
                return ColumnStats {
                    center: 0.0,
                    spread: 0.0,
                    status: ColumnStatus::AllNan,
                };
            }
            let (center, spread) = match kind {
                ScalerKind::StandardNormalize => {
                    let n = finite.len() as f64;
                    let mean = finite.iter().sum::<f64>() / n;
                    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
                ScalerKind::MinMax => {
                    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (min, max - min)
                }
                ScalerKind::None => (0.0, 1.0),
            };
            let status = if spread > 0.0 {
                ColumnStatus::Retained
            } else {
                ColumnStatus::Constant
            };
            ColumnStats {
                center,
                spread,
                status,
            }
        })
        .collect();
    ScalerState {
        kind,
        columns,
        nan_fill,
    }
}

/// Column-wise step only (z-score or min-max), without row normalization.
pub fn transform_columns(x: ArrayView2<'_, f64>, scaler: &ScalerState) -> Result<Array2<f64>> {
    if x.ncols() != scaler.n_columns() {
        return Err(Error::Dimension {
            expected: scaler.n_columns(),
            got: x.ncols(),
        });
    }
    let mut out = x.to_owned();
    for (mut col, stats) in out.axis_iter_mut(Axis(1)).zip(&scaler.columns) {
        for v in col.iter_mut() {
            *v = match stats.status {
                ColumnStatus::AllNan => scaler.nan_fill,
                _ if v.is_nan() => scaler.nan_fill,
                ColumnStatus::Constant if scaler.kind != ScalerKind::None => 0.0,
                _ if scaler.kind == ScalerKind::None => *v,
                _ => (*v - stats.center) / stats.spread,
            };
        }
    }
    Ok(out)
}

/// Apply a fitted scaler. Never mutates `scaler`.
pub fn transform(x: ArrayView2<'_, f64>, scaler: &ScalerState) -> Result<Array2<f64>> {
    let mut out = transform_columns(x, scaler)?;
    if scaler.kind == ScalerKind::StandardNormalize {
        for mut row in out.axis_iter_mut(Axis(0)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
    }
    Ok(out)
}
