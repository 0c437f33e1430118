//! Reference regressors: closed-form ridge, k-nearest neighbors and a direct
//! MLP. kNN predictions are averages of training targets and can never leave
//! the training range, which makes it the bounded contrast model.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fingerprint::Fingerprint;
use crate::nets::{mlp_init_with, read_flat, write_flat, Activation, AdamConfig, AdamState, EarlyStopping, Layer, MlpGrads, MlpParams, Parameters};
use crate::transduction::{read_json, write_json, History, TargetTransform};

/// Default regularization grid, selected by validation MAE.
pub const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

/// In-place `A = L D L^T` factorization of a symmetric matrix (lower
/// triangle read, unit `L` stored below the diagonal, `D` on it). Fails when
/// a pivot is not clearly positive.
fn ldl(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]] * a[[k, k]];
        }
        if !(d > 1e-12 * scale) {
            return Err(Error::Singular(format!(
                "normal equations are not positive definite (pivot {j} = {d:e}); use lambda > 0"
            )));
        }
        a[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]] * a[[k, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    Ok(())
}

fn ldl_solve(f: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut z = b.clone();
    for i in 0..n {
        for k in 0..i {
            z[i] -= f[[i, k]] * z[k];
        }
    }
    for i in 0..n {
        z[i] /= f[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= f[[k, i]] * z[k];
        }
    }
    z
}

/// Solve `(Xc^T Xc + lambda I) w = Xc^T yc` on centered data, then recover
/// the intercept from the means.
pub fn ridge_fit(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("ridge training set".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = &x - &x_mean;
    let yc: Array1<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut a = xc.t().dot(&xc);
    for i in 0..a.nrows() {
        a[[i, i]] += lambda;
    }
    let b = xc.t().dot(&yc);
    ldl(&mut a)?;
    let w = ldl_solve(&a, &b);
    let intercept = y_mean - x_mean.dot(&w);
    Ok(RidgeModel {
        weights: w.to_vec(),
        intercept,
        lambda,
    })
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: x.ncols(),
            });
        }
        Ok(x.rows()
            .into_iter()
            .map(|r| r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            .collect())
    }

    /// `sum (x w + b - y)^2 + lambda |w|^2`
    pub fn objective(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64> {
        let p = self.predict(x)?;
        let sse: f64 = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(sse + self.lambda * self.weights.iter().map(|w| w * w).sum::<f64>())
    }
}

fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64
}

/// Fit every lambda in `grid` and keep the lowest validation MAE (first wins
/// on ties). Lambdas whose system is singular are skipped.
pub fn ridge_select(train: &LabeledSet, val: &LabeledSet, grid: &[f64]) -> Result<(RidgeModel, Vec<(f64, f64)>)> {
    let mut scores = Vec::new();
    let mut best: Option<(f64, RidgeModel)> = None;
    for &lambda in grid {
        let model = match ridge_fit(train.x.view(), &train.y, lambda) {
            Ok(m) => m,
            Err(Error::Singular(_)) => continue,
            Err(e) => return Err(e),
        };
        let score = if val.is_empty() { 0.0 } else { mae(&model.predict(val.x.view())?, &val.y) };
        scores.push((lambda, score));
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, model));
        }
    }
    best.map(|(_, m)| (m, scores))
        .ok_or_else(|| Error::Singular("no lambda in the grid gave a solvable system".into()))
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub k: usize,
}

pub fn knn_fit(train: &LabeledSet, k: usize) -> Result<KnnModel> {
    if k == 0 || k > train.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={} (training size)",
            train.len()
        )));
    }
    Ok(KnnModel {
        x: train.x.clone(),
        y: train.y.clone(),
        k,
    })
}

impl KnnModel {
    /// Mean target of the `k` nearest training rows by Euclidean distance;
    /// equal distances keep the lower training row (id order).
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.x.ncols() {
            return Err(Error::Dimension {
                expected: self.x.ncols(),
                got: query.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k;
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(dist[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64)
    }

    pub fn predict_all(&self, queries: &Array2<f64>, exec: Execution) -> Result<Vec<f64>> {
        exec.try_map_range(queries.nrows(), |r| self.predict(queries.row(r).to_slice().expect("standard layout")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpBaselineConfig {
    /// Affine layers, so 3 means `input -> width -> width -> 1`.
    pub layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for MlpBaselineConfig {
    fn default() -> Self {
        MlpBaselineConfig {
            layers: 3,
            width: 256,
            epochs: 500,
            patience: 25,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Direct `x -> y` regressor on standardized targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBaseline {
    pub net: MlpParams,
    pub target: TargetTransform,
    pub scaler_checksum: Option<Fingerprint>,
}

impl MlpBaseline {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let out = self.net.predict_batch(x)?;
        Ok(out.column(0).iter().map(|&z| self.target.inverse(z)).collect())
    }

    /// Mean squared error against standardized targets, and its gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, targets: &[f64]) -> Result<(f64, MlpGrads)> {
        let n = targets.len();
        let (out, trace) = self.net.forward_batch(x)?;
        let resid: Vec<f64> = out.column(0).iter().zip(targets).map(|(p, t)| p - t).collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
        let grad_out = Array2::from_shape_fn((n, 1), |(i, _)| 2.0 * resid[i] / n as f64);
        let (g, _) = self.net.backward(&trace, grad_out.view())?;
        Ok((loss, g))
    }

    pub fn save(&self, dir: &Path, meta: &MlpBaselineMeta) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = MlpManifest {
            kind: "mlp".into(),
            dims: self.net.dims(),
            activations: self.net.activations(),
            param_file: "params.bin".into(),
            scaler_file: "scaler.json".into(),
            scaler_checksum: self.scaler_checksum.clone(),
            target_transform: self.target,
            meta: meta.clone(),
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        write_json(&dir.join("target_transform.json"), &self.target)?;
        let path = dir.join("params.bin");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_flat(&self.net, std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, MlpBaselineMeta)> {
        let m: MlpManifest = read_json(&dir.join("manifest.json"))?;
        let mut net = MlpParams::from_layers(
            m.dims
                .windows(2)
                .zip(&m.activations)
                .map(|(w, &activation)| Layer {
                    weight: Array2::zeros((w[1], w[0])),
                    bias: Array1::zeros(w[1]),
                    activation,
                })
                .collect(),
        )?;
        let path = dir.join(&m.param_file);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_flat(&mut net, std::io::BufReader::new(file))?;
        Ok((
            MlpBaseline {
                net,
                target: m.target_transform,
                scaler_checksum: m.scaler_checksum,
            },
            m.meta,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBaselineMeta {
    pub seed: u64,
    pub best_epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<Fingerprint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MlpManifest {
    kind: String,
    dims: Vec<usize>,
    activations: Vec<Activation>,
    param_file: String,
    scaler_file: String,
    scaler_checksum: Option<Fingerprint>,
    target_transform: TargetTransform,
    meta: MlpBaselineMeta,
}

/// Train the direct MLP with the same early-stopping protocol as the
/// transductive model.
pub fn mlp_baseline(train: &LabeledSet, val: &LabeledSet, config: &MlpBaselineConfig) -> Result<(MlpBaseline, History)> {
    if config.batch_size == 0 || config.layers == 0 {
        return Err(Error::InvalidArgument("batch_size and layers must be positive".into()));
    }
    let target = TargetTransform::fit(&train.y)?;
    let y_std: Vec<f64> = train.y.iter().map(|&y| target.forward(y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dims = vec![train.dim()];
    dims.extend(std::iter::repeat_n(config.width, config.layers - 1));
    dims.push(1);
    let mut model = MlpBaseline {
        net: mlp_init_with(&dims, &mut rng)?,
        target,
        scaler_checksum: train.scaler_checksum.clone(),
    };
    let mut adam = AdamState::new(config.adam, &model.net);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = train.x.select(Axis(0), chunk);
            let tb: Vec<f64> = chunk.iter().map(|&i| y_std[i]).collect();
            let (loss, grads) = model.loss_and_gradient(xb.view(), &tb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut model.net, &grads).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::Diverged { epoch },
                other => other,
            })?;
        }
        history.train_loss.push(loss_sum / train.len() as f64);
        if val.is_empty() {
            best = model.clone();
            history.best_epoch = epoch;
            continue;
        }
        let score = mae(&model.predict(val.x.view())?, &val.y);
        if !score.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.val_mae.push(score);
        if stopper.observe(epoch, score) {
            best = model.clone();
            history.best_epoch = epoch;
        } else if stopper.should_stop() {
            break;
        }
    }
    Ok((best, history))
}

impl Parameters for MlpBaseline {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        self.net.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.blocks_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(x: Array2<f64>, y: Vec<f64>) -> LabeledSet {
        let ids = (0..y.len()).map(|i| format!("s{i:04}")).collect();
        LabeledSet::new(ids, x, y).unwrap()
    }

    #[test]
    fn ridge_exact_line() {
        let m = ridge_fit(array![[1.0], [2.0]].view(), &[1.0, 2.0], 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-15);
        assert!(m.intercept.abs() < 1e-15);
    }

    #[test]
    fn ridge_two_point_lambda_one() {
        let m = ridge_fit(array![[1.0], [2.0]].view(), &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(m.weights[0], 1.0 / 3.0);
        assert_eq!(m.intercept, 1.0);
        assert_eq!(m.predict(array![[3.0]].view()).unwrap(), vec![2.0]);
    }

    #[test]
    fn ridge_duplicate_rows_with_penalty() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [3.0, 6.0]];
        let m = ridge_fit(x.view(), &[1.0, 1.0, 3.0], 0.1).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        assert!(matches!(ridge_fit(x.view(), &[1.0, 1.0, 3.0], 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn ridge_predict_trivia() {
        let m = RidgeModel { weights: vec![1.0], intercept: 0.0, lambda: 0.0 };
        assert_eq!(m.predict(array![[3.0]].view()).unwrap(), vec![3.0]);
        let z = RidgeModel { weights: vec![0.0, 0.0], intercept: 4.5, lambda: 0.0 };
        assert_eq!(z.predict(array![[1.0, 2.0], [-3.0, 9.0]].view()).unwrap(), vec![4.5, 4.5]);
        assert!(matches!(z.predict(array![[1.0]].view()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn ridge_selection_prefers_lowest_val_mae() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * (j + 3)) % 7) as f64);
        let y: Vec<f64> = x.rows().into_iter().map(|r| 2.0 * r[0] - r[1] + 0.5).collect();
        let train = set(x.slice(ndarray::s![..25, ..]).to_owned(), y[..25].to_vec());
        let val = set(x.slice(ndarray::s![25.., ..]).to_owned(), y[25..].to_vec());
        let (m, scores) = ridge_select(&train, &val, &LAMBDA_GRID).unwrap();
        assert_eq!(scores.len(), LAMBDA_GRID.len());
        assert_eq!(m.lambda, 1e-3);
    }

    #[test]
    fn knn_basics() {
        let train = set(array![[0.0], [1.0], [5.0]], vec![0.0, 10.0, 20.0]);
        let k1 = knn_fit(&train, 1).unwrap();
        assert_eq!(k1.predict(&[1.0]).unwrap(), 10.0);
        let k3 = knn_fit(&train, 3).unwrap();
        assert_eq!(k3.predict(&[100.0]).unwrap(), 10.0);
        let two = set(array![[0.0], [1.0]], vec![0.0, 10.0]);
        assert_eq!(knn_fit(&two, 2).unwrap().predict(&[-7.0]).unwrap(), 5.0);
        assert!(knn_fit(&two, 3).is_err());
        // equidistant neighbours: lower id wins
        assert_eq!(k1.predict(&[0.5]).unwrap(), 0.0);
    }
}
