//! Optional feature selection by normalized mutual information with the target.

use ndarray::{ArrayView2, Axis};

/// Equal-width bin label per value; NaN gets its own label `bins`.
fn discretize(values: impl Iterator<Item = f64> + Clone, bins: usize) -> Vec<usize> {
    let finite = values.clone().filter(|v| !v.is_nan());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    values
        .map(|v| {
            if v.is_nan() {
                bins
            } else if !(width > 0.0) {
                0
            } else {
                (((v - min) / width) as usize).min(bins - 1)
            }
        })
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(X;Y) / sqrt(H(X) H(Y))` between two discretized variables; 0 when
/// either variable is constant.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * kb + j] += 1;
        ca[i] += 1;
        cb[j] += 1;
    }
    let ha = entropy(ca.into_iter(), n);
    let hb = entropy(cb.into_iter(), n);
    if ha <= 0.0 || hb <= 0.0 {
        return 0.0;
    }
    let hab = entropy(joint.into_iter(), n);
    ((ha + hb - hab) / (ha * hb).sqrt()).max(0.0)
}

/// Indices (ascending) of the `k` columns with highest NMI against `y`.
/// Ties keep the lower column index.
pub fn top_k_by_nmi(x: ArrayView2<'_, f64>, y: &[f64], k: usize, bins: usize) -> Vec<usize> {
    let bins = bins.max(2);
    let yb = discretize(y.iter().copied(), bins);
    let mut scored: Vec<(usize, f64)> = x
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(j, col)| (j, normalized_mutual_information(&discretize(col.iter().copied(), bins), &yb)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = scored.into_iter().take(k).map(|(j, _)| j).collect();
    keep.sort_unstable();
    keep
}
