use log::debug;
use serde::{Deserialize, Serialize};

use super::anchor::{AnchorResult, AnchorSearcher};
use super::index::{build_difference_index, IndexConfig};
use super::model::{Architecture, BilinearModel, TargetTransform};
use super::pairs::{PairBatch, PairSampler, PairSampling};
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nets::{AdamConfig, AdamState, EarlyStopping};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransductionConfig {
    pub arch: Architecture,
    pub pairs: PairSampling,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Difference index used for validation anchors (and, by default, at
    /// inference).
    pub index: IndexConfig,
    pub seed: u64,
}

impl Default for TransductionConfig {
    fn default() -> Self {
        TransductionConfig {
            arch: Architecture::default(),
            pairs: PairSampling::PerTarget(4),
            epochs: 500,
            patience: 25,
            batch_size: 128,
            adam: AdamConfig::default(),
            index: IndexConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean pair loss per epoch in standardized target units.
    pub train_loss: Vec<f64>,
    /// Validation MAE per epoch in target units (empty without a val set).
    pub val_mae: Vec<f64>,
    /// Epoch (0-based) whose parameters were returned.
    pub best_epoch: usize,
}

/// Derive independent RNG seeds for the sub-streams of one training run.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Fit the bilinear predictor on ordered training pairs.
///
/// Each epoch draws pairs from `train`, shuffles them and takes Adam steps on
/// mini-batches of squared error in standardized target space. After every
/// epoch the validation MAE is measured through the deployed prediction path
/// (anchors and differences from `train` only); the best-scoring parameters
/// are returned once `patience` epochs pass without improvement.
pub fn train_bilinear(train: &LabeledSet, val: &LabeledSet, config: &TransductionConfig) -> Result<(BilinearModel, History)> {
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if !val.is_empty() && val.dim() != train.dim() {
        return Err(Error::Dimension {
            expected: train.dim(),
            got: val.dim(),
        });
    }
    let target = TargetTransform::fit(&train.y)?;
    let y_std: Vec<f64> = train.y.iter().map(|&y| target.forward(y)).collect();
    let mut model = BilinearModel::init(train.dim(), config.arch, target, sub_seed(config.seed, 0))?;
    model.scaler_checksum = train.scaler_checksum.clone();
    let mut sampler = PairSampler::new(&train.y, config.pairs, sub_seed(config.seed, 1))?;

    let val_anchors: Vec<AnchorResult> = if val.is_empty() {
        Vec::new()
    } else {
        let index = build_difference_index(train, config.index)?;
        AnchorSearcher::new(train, &index)?.select_all(&val.x, Execution::default())?
    };

    let mut adam = AdamState::new(config.adam, &model);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut history = History::default();
    for epoch in 0..config.epochs {
        let pairs = sampler.shuffled_epoch();
        let mut loss_sum = 0.0;
        for chunk in pairs.chunks(config.batch_size) {
            let batch = PairBatch::new(train, chunk)?;
            let targets: Vec<f64> = chunk.iter().map(|&(_, t)| y_std[t]).collect();
            let (loss, grads) = model.loss_and_gradient(&batch, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut model, &grads).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::Diverged { epoch },
                other => other,
            })?;
        }
        let epoch_loss = loss_sum / pairs.len() as f64;
        history.train_loss.push(epoch_loss);

        if val.is_empty() {
            best = model.clone();
            history.best_epoch = epoch;
            continue;
        }
        let pred = model.predict_batch(&val.x, train, &val_anchors)?;
        let mae = pred.iter().zip(&val.y).map(|(p, y)| (p - y).abs()).sum::<f64>() / val.len() as f64;
        if !mae.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.val_mae.push(mae);
        debug!("epoch {epoch}: train loss {epoch_loss:.6}, val MAE {mae:.6}");
        if stopper.observe(epoch, mae) {
            best = model.clone();
            history.best_epoch = epoch;
        } else if stopper.should_stop() {
            break;
        }
    }
    Ok((best, history))
}
