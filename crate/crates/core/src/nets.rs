//! Dense MLP kernel with exact reverse-mode gradients and an Adam optimizer.
//!
//! Activations are batched row-wise: a batch is an `(n, in)` matrix and every
//! layer computes `act(x W^T + b)`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(out, in)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Named flat views over trainable tensors, in a fixed order.
///
/// Implemented by parameter sets and by their gradients so the optimizer and
/// the checkpoint writer can walk them uniformly.
pub trait Parameters {
    fn blocks(&self) -> Vec<(String, &[f64])>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct MlpParams {
    layers: Vec<Layer>,
    generation: u64,
}

/// Equality compares weights only; the trace generation is bookkeeping.
impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Uniform Glorot initialization, zero biases, ReLU on hidden layers and
/// identity on the output layer.
pub fn mlp_init(dims: &[usize], seed: u64) -> Result<MlpParams> {
    mlp_init_with(dims, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn mlp_init_with<R: Rng>(dims: &[usize], rng: &mut R) -> Result<MlpParams> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument("an MLP needs at least input and output dims".into()));
    }
    if let Some(d) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::InvalidArgument(format!("layer width must be positive, got {d}")));
    }
    let n_layers = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..=limit));
            Layer {
                weight,
                bias: Array1::zeros(fan_out),
                activation: if i + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            }
        })
        .collect();
    Ok(MlpParams { layers, generation: 0 })
}

/// Intermediate values kept by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    generation: u64,
    /// Input to each layer, `(batch, in)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `(batch, out)`.
    pre: Vec<Array2<f64>>,
}

impl Trace {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].weight.nrows() != pair[1].weight.ncols() {
                return Err(Error::Dimension {
                    expected: pair[0].weight.nrows(),
                    got: pair[1].weight.ncols(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::Dimension {
                    expected: l.weight.nrows(),
                    got: l.bias.len(),
                });
            }
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        Ok(MlpParams { layers, generation: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    /// `[in, hidden..., out]`
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.nrows()));
        d
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Forward a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Trace)> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let (out, trace) = self.forward_batch(batch)?;
        Ok((out.into_raw_vec_and_offset().0, trace))
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Trace)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok((
            h,
            Trace {
                generation: self.generation,
                inputs,
                pre,
            },
        ))
    }

    /// Forward without keeping a trace.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            h = z;
        }
        Ok(h)
    }

    /// Gradients of `sum(output * grad_output)` with respect to every
    /// parameter (summed over the batch) and to the input.
    pub fn backward(&self, trace: &Trace, grad_output: ArrayView2<'_, f64>) -> Result<(MlpGrads, Array2<f64>)> {
        if trace.generation != self.generation || trace.inputs.len() != self.layers.len() {
            return Err(Error::StaleTrace);
        }
        if grad_output.dim() != (trace.batch_size(), self.output_dim()) {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: grad_output.ncols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for ((layer, input), pre) in self.layers.iter().zip(&trace.inputs).zip(&trace.pre).rev() {
            if pre.ncols() != layer.weight.nrows() || input.ncols() != layer.weight.ncols() {
                return Err(Error::StaleTrace);
            }
            let act = layer.activation;
            let delta = if act == Activation::Identity {
                upstream
            } else {
                let mut d = upstream;
                d.zip_mut_with(pre, |g, &z| *g *= act.derivative(z));
                d
            };
            let gw = delta.t().dot(input).as_standard_layout().into_owned();
            let gb = delta.sum_axis(Axis(0));
            upstream = delta.dot(&layer.weight);
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, upstream))
    }

    /// Backward for a single-sample trace.
    pub fn backward_vec(&self, trace: &Trace, grad_output: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let g = ArrayView2::from_shape((1, grad_output.len()), grad_output).expect("row vector");
        let (grads, gi) = self.backward(trace, g)?;
        Ok((grads, gi.into_raw_vec_and_offset().0))
    }
}

impl Parameters for MlpParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), l.weight.as_slice().expect("standard layout")),
                    (format!("layer{i}.bias"), l.bias.as_slice().expect("standard layout")),
                ]
            })
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

impl Parameters for MlpGrads {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [
                    (format!("layer{i}.weight"), w.as_slice().expect("standard layout")),
                    (format!("layer{i}.bias"), b.as_slice().expect("standard layout")),
                ]
            })
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w.as_slice_mut().expect("standard layout"), b.as_slice_mut().expect("standard layout")])
            .collect()
    }
}

/// Row-wise dot products of two equally shaped matrices.
pub fn row_dots(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array1<f64> {
    Array1::from_iter(a.rows().into_iter().zip(b.rows()).map(|(x, y)| dot(x, y)))
}

pub fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.blocks().iter().map(|(_, b)| b.len()).collect();
        AdamState {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected Adam update. Gradients are validated before any
    /// parameter is touched.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let gblocks = grads.blocks();
        if gblocks.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: gblocks.len(),
            });
        }
        for ((name, g), m) in gblocks.iter().zip(&self.m) {
            if g.len() != m.len() {
                return Err(Error::Dimension {
                    expected: m.len(),
                    got: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let pblocks = params.blocks_mut();
        if pblocks.len() != gblocks.len() {
            return Err(Error::Dimension {
                expected: gblocks.len(),
                got: pblocks.len(),
            });
        }
        for (((p, (_, g)), m), v) in pblocks.into_iter().zip(&gblocks).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i] + weight_decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Write every parameter block as little-endian f64, in block order.
pub fn write_flat<P: Parameters + ?Sized, W: Write>(params: &P, mut w: W) -> std::io::Result<()> {
    for (_, block) in params.blocks() {
        for v in block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

/// Fill parameter blocks from a little-endian f64 stream written by
/// [`write_flat`]. Trailing data is an error.
pub fn read_flat<P: Parameters + ?Sized, R: Read>(params: &mut P, mut r: R) -> Result<()> {
    let expected = params.n_params();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<parameter stream>", e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Dimension {
            expected,
            got: bytes.len() / 8,
        });
    }
    let mut chunks = bytes.chunks_exact(8);
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            let c = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    Ok(())
}

/// Patience-based early stopping on a validation score (lower is better).
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Record an epoch's score; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score < self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}
