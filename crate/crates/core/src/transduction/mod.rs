//! Bilinear transduction: pair sampling, the two-tower predictor, and
//! nearest-difference anchor search.

mod anchor;
mod export;
mod index;
mod model;
mod pairs;
mod train;

pub use anchor::{select_anchor, AnchorResult, AnchorSearcher};
pub use export::{
    export_analogies, read_predictions, read_predictions_file, write_predictions, write_predictions_file,
    AnchorColumns, PredictionRow, ANALOGIES_HEADER, PREDICTIONS_HEADER,
};
pub use index::{build_difference_index, DiffIndex, IndexConfig, IndexMode, DEFAULT_EXHAUSTIVE_CAP};
pub use model::{Architecture, BilinearModel, ModelGrads, ModelMeta, TargetTransform};
pub use pairs::{build_pairs, PairBatch, PairSampler, PairSampling};
pub use train::{train_bilinear, History, TransductionConfig};

pub(crate) use model::{read_json, write_json};
