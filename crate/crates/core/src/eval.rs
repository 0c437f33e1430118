//! Error and extrapolation metrics over held-out predictions.
//!
//! Every reduction runs in row order, so an independent script summing the
//! predictions file top to bottom reproduces the reported values bit for bit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::round_half_up;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

pub const DEFAULT_PRECISION_FRAC: f64 = 0.30;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("evaluation rows".into()));
    }
    Ok(())
}

/// Mean absolute error and its standard error (sample deviation over `sqrt(n)`).
pub fn mae_sem(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    check_lengths(pred, truth)?;
    let n = truth.len() as f64;
    let errs: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect();
    let mae = errs.iter().sum::<f64>() / n;
    if errs.len() == 1 {
        return Ok((mae, 0.0));
    }
    let var = errs.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / (n - 1.0);
    Ok((mae, var.sqrt() / n.sqrt()))
}

/// Share of rows with `truth > support_max` whose prediction also exceeds
/// `support_max`. `None` when no row is a positive.
pub fn ood_tpr(pred: &[f64], truth: &[f64], support_max: f64) -> Option<f64> {
    let mut positives = 0usize;
    let mut hits = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if *t > support_max {
            positives += 1;
            if *p > support_max {
                hits += 1;
            }
        }
    }
    (positives > 0).then(|| hits as f64 / positives as f64)
}

fn top_m<'a>(values: &[f64], ids: &'a [String], m: usize) -> Vec<&'a str> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| ids[a].cmp(&ids[b])));
    order[..m].iter().map(|&i| ids[i].as_str()).collect()
}

/// Overlap between the `round(frac * n)` rows ranked highest by prediction
/// and the same number ranked highest by truth, divided by that number.
/// Equal values rank by ascending id.
pub fn extrapolative_precision(pred: &[f64], truth: &[f64], ids: &[String], frac: f64) -> Result<f64> {
    check_lengths(pred, truth)?;
    if ids.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: ids.len(),
        });
    }
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::InvalidArgument(format!("frac must lie in [0, 1], got {frac}")));
    }
    let m = round_half_up(frac * truth.len() as f64).min(truth.len());
    if m == 0 {
        return Err(Error::InvalidArgument(format!(
            "top fraction {frac} of {} rows selects nothing",
            truth.len()
        )));
    }
    let mut predicted = top_m(pred, ids, m);
    predicted.sort_unstable();
    let hits = top_m(truth, ids, m)
        .into_iter()
        .filter(|id| predicted.binary_search(id).is_ok())
        .count();
    Ok(hits as f64 / m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub pred_counts: Vec<usize>,
    pub truth_counts: Vec<usize>,
}

/// Equal-width bins spanning both series; a zero-width range collapses to one bin.
pub fn histogram(pred: &[f64], truth: &[f64], bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("bins must be at least 2, got {bins}")));
    }
    let all = pred.iter().chain(truth);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Empty("histogram input".into()));
    }
    if hi == lo {
        return Ok(Histogram {
            edges: vec![lo, hi],
            pred_counts: vec![pred.len()],
            truth_counts: vec![truth.len()],
        });
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let count = |values: &[f64]| {
        let mut c = vec![0usize; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            c[b] += 1;
        }
        c
    };
    Ok(Histogram {
        edges,
        pred_counts: count(pred),
        truth_counts: count(truth),
    })
}

impl Histogram {
    /// `bin_lo,bin_hi,pred_count,truth_count`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "pred_count", "truth_count"])?;
        for (i, (p, t)) in self.pred_counts.iter().zip(&self.truth_counts).enumerate() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                p.to_string(),
                t.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<histogram>", e))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// One scored held-out row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub y_true: f64,
    pub y_pred: f64,
    pub ood: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetCounts {
    pub id: usize,
    pub ood: usize,
    pub total: usize,
}

/// Metric values; subset entries are `None` when the subset is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ood_mae: Option<f64>,
    pub ood_sem: Option<f64>,
    pub id_mae: Option<f64>,
    pub id_sem: Option<f64>,
    pub all_mae: f64,
    pub all_sem: f64,
    pub tpr: Option<f64>,
    pub precision_at_frac: f64,
    pub frac: f64,
    pub support_max: f64,
    pub counts: SubsetCounts,
}

fn subset_mae(rows: &[EvalRow], ood: bool) -> Result<(Option<f64>, Option<f64>)> {
    let (p, t): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.ood == ood).map(|r| (r.y_pred, r.y_true)).unzip();
    if t.is_empty() {
        return Ok((None, None));
    }
    let (m, s) = mae_sem(&p, &t)?;
    Ok((Some(m), Some(s)))
}

/// TPR is computed over OOD rows, precision over all rows.
pub fn compute_metrics(rows: &[EvalRow], support_max: f64, frac: f64) -> Result<Metrics> {
    let pred: Vec<f64> = rows.iter().map(|r| r.y_pred).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.y_true).collect();
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let (all_mae, all_sem) = mae_sem(&pred, &truth)?;
    let (ood_mae, ood_sem) = subset_mae(rows, true)?;
    let (id_mae, id_sem) = subset_mae(rows, false)?;
    let (op, ot): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.ood).map(|r| (r.y_pred, r.y_true)).unzip();
    let n_ood = ot.len();
    Ok(Metrics {
        ood_mae,
        ood_sem,
        id_mae,
        id_sem,
        all_mae,
        all_sem,
        tpr: ood_tpr(&op, &ot, support_max),
        precision_at_frac: extrapolative_precision(&pred, &truth, &ids, frac)?,
        frac,
        support_max,
        counts: SubsetCounts {
            id: rows.len() - n_ood,
            ood: n_ood,
            total: rows.len(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tool_version: String,
    pub model: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub log10_targets: bool,
    pub seeds: BTreeMap<String, u64>,
    pub input_hashes: BTreeMap<String, String>,
    pub config_fingerprint: Option<Fingerprint>,
}

impl MetricsReport {
    pub fn new(model: &str, metrics: Metrics) -> Self {
        MetricsReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            model: model.to_string(),
            metrics,
            log10_targets: false,
            seeds: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            config_fingerprint: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i:02}")).collect()
    }

    #[test]
    fn mae_sem_examples() {
        assert_eq!(mae_sem(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        assert_eq!(mae_sem(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), (2.0, 1.0));
        assert_eq!(mae_sem(&[4.0], &[1.5]).unwrap(), (2.5, 0.0));
        assert!(mae_sem(&[], &[]).is_err());
    }

    #[test]
    fn tpr_examples() {
        assert_eq!(ood_tpr(&[11.0, 8.0], &[10.0, 12.0], 9.0), Some(0.5));
        assert_eq!(ood_tpr(&[1.0, 2.0], &[10.0, 12.0], 9.0), Some(0.0));
        assert_eq!(ood_tpr(&[10.0], &[1.0], 9.0), None);
        // equal to the threshold is not above it
        assert_eq!(ood_tpr(&[9.0], &[10.0], 9.0), Some(0.0));
    }

    #[test]
    fn precision_examples() {
        let truth: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(extrapolative_precision(&truth, &truth, &ids(10), 0.3).unwrap(), 1.0);
        // true top 3 = {9,8,7}; predicted top 3 = {9,8,0}
        let mut pred = truth.clone();
        pred[0] = 100.0;
        pred[7] = -1.0;
        assert_eq!(extrapolative_precision(&pred, &truth, &ids(10), 0.3).unwrap(), 2.0 / 3.0);
        assert!(extrapolative_precision(&[1.0], &[1.0], &ids(1), 0.3).is_err());
    }

    #[test]
    fn precision_ties_rank_by_id() {
        let pred = [1.0, 1.0, 1.0, 1.0];
        let truth = [0.0, 5.0, 0.0, 0.0];
        // m = 1; predicted top is r00 by id, true top is r01
        assert_eq!(extrapolative_precision(&pred, &truth, &ids(4), 0.25).unwrap(), 0.0);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.0, 1.0], &[0.0, 1.0], 2).unwrap();
        assert_eq!(h.pred_counts, vec![1, 1]);
        assert_eq!(h.pred_counts, h.truth_counts);
        let flat = histogram(&[2.0, 2.0], &[2.0], 5).unwrap();
        assert_eq!(flat.pred_counts, vec![2]);
        assert_eq!(flat.truth_counts, vec![1]);
        assert!(histogram(&[0.0], &[1.0], 1).is_err());
        let wide = histogram(&[0.0, 0.3, 0.7, 9.9], &[10.0], 7).unwrap();
        assert_eq!(wide.pred_counts.iter().sum::<usize>(), 4);
        assert_eq!(wide.truth_counts.iter().sum::<usize>(), 1);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_lo,bin_hi,pred_count,truth_count\n0,0.5,1,1\n0.5,1,1,1\n");
    }

    #[test]
    fn metrics_split_by_subset() {
        let rows = vec![
            EvalRow { id: "a".into(), y_true: 1.0, y_pred: 1.5, ood: false },
            EvalRow { id: "b".into(), y_true: 2.0, y_pred: 2.0, ood: false },
            EvalRow { id: "c".into(), y_true: 10.0, y_pred: 11.0, ood: true },
            EvalRow { id: "d".into(), y_true: 12.0, y_pred: 8.0, ood: true },
        ];
        let m = compute_metrics(&rows, 9.0, 0.5).unwrap();
        assert_eq!(m.ood_mae, Some(2.5));
        assert!((m.ood_sem.unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(m.id_mae, Some(0.25));
        assert_eq!(m.tpr, Some(0.5));
        assert_eq!(m.precision_at_frac, 1.0);
        assert_eq!(m.counts, SubsetCounts { id: 2, ood: 2, total: 4 });
        let json = MetricsReport::new("bilinear", m).to_json().unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.metrics.tpr, Some(0.5));
    }
}
