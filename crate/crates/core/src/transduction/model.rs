use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anchor::AnchorResult;
use super::index::IndexConfig;
use super::pairs::PairBatch;
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::nets::{mlp_init_with, read_flat, row_dots, write_flat, Activation, Layer, MlpGrads, MlpParams, Parameters};

/// Affine standardization of targets: `z = (y - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub mean: f64,
    pub std: f64,
}

impl TargetTransform {
    /// Mean and population standard deviation; fails on constant targets.
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("targets".into()));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return Err(Error::NoPairs);
        }
        Ok(TargetTransform { mean, std })
    }

    pub fn identity() -> Self {
        TargetTransform { mean: 0.0, std: 1.0 }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Tower shapes. `layers` counts affine layers per tower, so 3 layers means
/// `input -> width -> width -> embed_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: usize,
    pub width: usize,
    pub embed_dim: usize,
    /// Learn a full `k x k` interaction matrix between the embeddings
    /// (initialized to identity) instead of a plain inner product.
    pub interaction: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            layers: 3,
            width: 256,
            embed_dim: 32,
            interaction: false,
        }
    }
}

impl Architecture {
    pub fn tower_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(self.width, self.layers.saturating_sub(1)));
        dims.push(self.embed_dim);
        dims
    }
}

/// `h(dx, x) = f(dx)^T W g(x)` with `W = I` unless an interaction matrix is
/// learned. Outputs live in standardized target space.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearModel {
    /// Embeds the feature difference.
    pub f: MlpParams,
    /// Embeds the anchor.
    pub g: MlpParams,
    pub interaction: Option<Array2<f64>>,
    pub target: TargetTransform,
    pub scaler_checksum: Option<Fingerprint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub f: MlpGrads,
    pub g: MlpGrads,
    pub interaction: Option<Array2<f64>>,
}

impl BilinearModel {
    pub fn init(input_dim: usize, arch: Architecture, target: TargetTransform, seed: u64) -> Result<Self> {
        if arch.layers == 0 {
            return Err(Error::InvalidArgument("layers must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = arch.tower_dims(input_dim);
        let f = mlp_init_with(&dims, &mut rng)?;
        let g = mlp_init_with(&dims, &mut rng)?;
        Ok(BilinearModel {
            f,
            g,
            interaction: arch.interaction.then(|| Array2::eye(arch.embed_dim)),
            target,
            scaler_checksum: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.f.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.f.output_dim()
    }

    /// Standardized `h(delta, anchor)` for one pair.
    pub fn forward(&self, delta: &[f64], anchor: &[f64]) -> Result<f64> {
        let dv = ArrayView2::from_shape((1, delta.len()), delta).expect("row");
        let av = ArrayView2::from_shape((1, anchor.len()), anchor).expect("row");
        Ok(self.forward_batch(dv, av)?[0])
    }

    pub fn forward_batch(&self, delta: ArrayView2<'_, f64>, anchors: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if delta.nrows() != anchors.nrows() {
            return Err(Error::Dimension {
                expected: delta.nrows(),
                got: anchors.nrows(),
            });
        }
        let fe = self.f.predict_batch(delta)?;
        let ge = self.g.predict_batch(anchors)?;
        Ok(match &self.interaction {
            Some(w) => row_dots(fe.dot(w).view(), ge.view()),
            None => row_dots(fe.view(), ge.view()),
        })
    }

    /// De-standardized prediction for `query` through its anchor.
    pub fn predict(&self, query: &[f64], train: &LabeledSet, anchor: &AnchorResult) -> Result<f64> {
        self.check_scaler(anchor.scaler_checksum.as_ref())?;
        if query.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: query.len(),
            });
        }
        let xa = train.row(anchor.anchor);
        let delta: Vec<f64> = query.iter().zip(xa).map(|(q, a)| q - a).collect();
        Ok(self.target.inverse(self.forward(&delta, xa)?))
    }

    /// Batched [`BilinearModel::predict`] over the rows of `queries`.
    pub fn predict_batch(&self, queries: &Array2<f64>, train: &LabeledSet, anchors: &[AnchorResult]) -> Result<Vec<f64>> {
        if anchors.len() != queries.nrows() {
            return Err(Error::Dimension {
                expected: queries.nrows(),
                got: anchors.len(),
            });
        }
        if queries.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: queries.ncols(),
            });
        }
        for a in anchors {
            self.check_scaler(a.scaler_checksum.as_ref())?;
        }
        let rows: Vec<usize> = anchors.iter().map(|a| a.anchor).collect();
        let xa = train.x.select(Axis(0), &rows);
        let delta = queries - &xa;
        let z = self.forward_batch(delta.view(), xa.view())?;
        Ok(z.iter().map(|&v| self.target.inverse(v)).collect())
    }

    fn check_scaler(&self, got: Option<&Fingerprint>) -> Result<()> {
        match (&self.scaler_checksum, got) {
            (Some(expected), Some(got)) if expected != got => Err(Error::ScalerMismatch {
                expected: expected.to_string(),
                got: got.to_string(),
            }),
            (Some(expected), None) => Err(Error::ScalerMismatch {
                expected: expected.to_string(),
                got: "none".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Mean squared error over the batch against standardized targets.
    pub fn loss(&self, batch: &PairBatch, targets: &[f64]) -> Result<f64> {
        let h = self.forward_batch(batch.delta.view(), batch.anchors.view())?;
        Ok(h.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / targets.len() as f64)
    }

    /// Mean squared error and its exact gradient.
    pub fn loss_and_gradient(&self, batch: &PairBatch, targets: &[f64]) -> Result<(f64, ModelGrads)> {
        let n = targets.len();
        if n != batch.pairs.len() || n == 0 {
            return Err(Error::Dimension {
                expected: batch.pairs.len(),
                got: n,
            });
        }
        let (fe, ftrace) = self.f.forward_batch(batch.delta.view())?;
        let (ge, gtrace) = self.g.forward_batch(batch.anchors.view())?;
        // fw = f W, gw = g W^T, so h = rowdot(fw, g) = rowdot(f, gw)
        let (fw, gw) = match &self.interaction {
            Some(w) => (fe.dot(w), ge.dot(&w.t())),
            None => (fe.clone(), ge.clone()),
        };
        let h = row_dots(fw.view(), ge.view());
        let resid: Array1<f64> = h.iter().zip(targets).map(|(p, t)| p - t).collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
        let dh = resid.mapv(|r| 2.0 * r / n as f64).insert_axis(Axis(1));

        let grad_f_out = &gw * &dh;
        let grad_g_out = &fw * &dh;
        let grad_w = self.interaction.as_ref().map(|_| fe.t().dot(&(&ge * &dh)));
        let (gf, _) = self.f.backward(&ftrace, grad_f_out.view())?;
        let (gg, _) = self.g.backward(&gtrace, grad_g_out.view())?;
        Ok((
            loss,
            ModelGrads {
                f: gf,
                g: gg,
                interaction: grad_w,
            },
        ))
    }

    pub fn save(&self, dir: &Path, meta: &ModelMeta) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = BilinearManifest {
            kind: "bilinear_transduction".into(),
            input_dim: self.input_dim(),
            f_dims: self.f.dims(),
            f_activations: self.f.activations(),
            g_dims: self.g.dims(),
            g_activations: self.g.activations(),
            interaction: self.interaction.is_some(),
            param_blocks: self.blocks().into_iter().map(|(n, b)| (n, b.len())).collect(),
            param_file: "params.bin".into(),
            scaler_file: "scaler.json".into(),
            scaler_checksum: self.scaler_checksum.clone(),
            target_transform_file: "target_transform.json".into(),
            diff_index_file: "diff_index.json".into(),
            meta: meta.clone(),
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        write_json(&dir.join("target_transform.json"), &self.target)?;
        write_json(&dir.join("diff_index.json"), &meta.index)?;
        let path = dir.join("params.bin");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_flat(self, std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, ModelMeta)> {
        let manifest: BilinearManifest = read_json(&dir.join("manifest.json"))?;
        let target: TargetTransform = read_json(&dir.join(&manifest.target_transform_file))?;
        let tower = |dims: &[usize], acts: &[Activation]| -> Result<MlpParams> {
            if dims.len() != acts.len() + 1 {
                return Err(Error::InvalidArgument("manifest dims and activations disagree".into()));
            }
            MlpParams::from_layers(
                dims.windows(2)
                    .zip(acts)
                    .map(|(w, &activation)| Layer {
                        weight: Array2::zeros((w[1], w[0])),
                        bias: Array1::zeros(w[1]),
                        activation,
                    })
                    .collect(),
            )
        };
        let f = tower(&manifest.f_dims, &manifest.f_activations)?;
        let g = tower(&manifest.g_dims, &manifest.g_activations)?;
        let k = f.output_dim();
        let mut model = BilinearModel {
            f,
            g,
            interaction: manifest.interaction.then(|| Array2::zeros((k, k))),
            target,
            scaler_checksum: manifest.scaler_checksum.clone(),
        };
        let path = dir.join(&manifest.param_file);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_flat(&mut model, std::io::BufReader::new(file))?;
        Ok((model, manifest.meta))
    }
}

/// Provenance stored alongside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub index: IndexConfig,
    pub best_epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<Fingerprint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BilinearManifest {
    kind: String,
    input_dim: usize,
    f_dims: Vec<usize>,
    f_activations: Vec<Activation>,
    g_dims: Vec<usize>,
    g_activations: Vec<Activation>,
    interaction: bool,
    /// Name and length of each block in `params.bin`, little-endian f64.
    param_blocks: Vec<(String, usize)>,
    param_file: String,
    scaler_file: String,
    scaler_checksum: Option<Fingerprint>,
    target_transform_file: String,
    diff_index_file: String,
    meta: ModelMeta,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn prefixed<'a>(prefix: &str, blocks: Vec<(String, &'a [f64])>) -> impl Iterator<Item = (String, &'a [f64])> + 'a {
    let prefix = prefix.to_string();
    blocks.into_iter().map(move |(n, b)| (format!("{prefix}.{n}"), b))
}

impl Parameters for BilinearModel {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<_> = prefixed("f", self.f.blocks()).chain(prefixed("g", self.g.blocks())).collect();
        if let Some(w) = &self.interaction {
            out.push(("interaction".into(), w.as_slice().expect("standard layout")));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.f.blocks_mut();
        out.extend(self.g.blocks_mut());
        if let Some(w) = &mut self.interaction {
            out.push(w.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl Parameters for ModelGrads {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<_> = prefixed("f", self.f.blocks()).chain(prefixed("g", self.g.blocks())).collect();
        if let Some(w) = &self.interaction {
            out.push(("interaction".into(), w.as_slice().expect("standard layout")));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.f.blocks_mut();
        out.extend(self.g.blocks_mut());
        if let Some(w) = &mut self.interaction {
            out.push(w.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_tower(out: f64) -> MlpParams {
        MlpParams::from_layers(vec![Layer {
            weight: Array2::zeros((1, 2)),
            bias: array![out],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn scalar_embeddings_multiply() {
        let m = BilinearModel {
            f: scalar_tower(3.0),
            g: scalar_tower(-2.5),
            interaction: None,
            target: TargetTransform::identity(),
            scaler_checksum: None,
        };
        assert_eq!(m.forward(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), -7.5);
    }

    #[test]
    fn zero_difference_embedding_annihilates() {
        let mut m = BilinearModel::init(2, Architecture { layers: 2, width: 4, embed_dim: 3, interaction: false }, TargetTransform { mean: 5.0, std: 2.0 }, 1).unwrap();
        for l in m.f.layers_mut() {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        assert_eq!(m.forward(&[1.0, -1.0], &[0.5, 0.5]).unwrap(), 0.0);
        let train = LabeledSet::new(vec!["a".into()], array![[0.2, 0.1]], vec![1.0]).unwrap();
        let anchor = AnchorResult {
            anchor: 0,
            anchor_id: "a".into(),
            pair_index: 0,
            pair_ids: ("a".into(), "a".into()),
            distance: 0.0,
            scaler_checksum: None,
        };
        assert_eq!(m.predict(&[9.0, 9.0], &train, &anchor).unwrap(), 5.0);
    }

    #[test]
    fn scaler_mismatch_is_rejected() {
        let mut m = BilinearModel::init(1, Architecture { layers: 1, width: 1, embed_dim: 2, interaction: false }, TargetTransform::identity(), 0).unwrap();
        m.scaler_checksum = Some(Fingerprint::of_bytes(b"one"));
        let train = LabeledSet::new(vec!["a".into()], array![[0.0]], vec![0.0]).unwrap();
        let anchor = AnchorResult {
            anchor: 0,
            anchor_id: "a".into(),
            pair_index: 0,
            pair_ids: ("a".into(), "a".into()),
            distance: 0.0,
            scaler_checksum: Some(Fingerprint::of_bytes(b"two")),
        };
        assert!(matches!(m.predict(&[1.0], &train, &anchor), Err(Error::ScalerMismatch { .. })));
    }

    #[test]
    fn target_transform_round_trip() {
        let t = TargetTransform::fit(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert!((t.inverse(t.forward(4.2)) - 4.2).abs() < 1e-14);
        assert!(matches!(TargetTransform::fit(&[1.0, 1.0]), Err(Error::NoPairs)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = BilinearModel::init(3, Architecture { layers: 3, width: 5, embed_dim: 4, interaction: true }, TargetTransform { mean: 1.5, std: 0.5 }, 8).unwrap();
        m.scaler_checksum = Some(Fingerprint::of_bytes(b"s"));
        let meta = ModelMeta {
            seed: 8,
            index: IndexConfig::default(),
            best_epoch: 3,
            config_fingerprint: None,
        };
        m.save(dir.path(), &meta).unwrap();
        let (back, back_meta) = BilinearModel::load(dir.path()).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.f.layers(), m.f.layers());
        assert_eq!(back.g.layers(), m.g.layers());
        assert_eq!(back.interaction, m.interaction);
        assert_eq!(back.target, m.target);
        assert_eq!(back.scaler_checksum, m.scaler_checksum);
    }
}
