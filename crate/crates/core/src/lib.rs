//! Zero-shot extrapolation of material and molecular property values with
//! bilinear transduction.
//!
//! A transductive predictor `h(x_i - x_j, x_j) = <f(x_i - x_j), g(x_j)>` is
//! trained on ordered pairs of training points (anchor `j` has the lower
//! target). At test time each query is paired with the training anchor whose
//! difference to the query best matches a difference seen in training, which
//! lets predictions leave the training target range.
//!
//! Modules:
//! - [`dataset`]: CSV ingestion, dedup, log scaling and the extrapolation split.
//! - [`featurizer`]: formula parsing, composition statistics and scalers.
//! - [`nets`]: MLP forward/backward and Adam.
//! - [`transduction`]: the bilinear model, pair sampling and anchor search.
//! - [`baselines`]: ridge, kNN and direct-MLP regressors.
//! - [`eval`]: OOD metrics and reports.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod featurizer;
pub mod fingerprint;
pub mod nets;
pub mod synthetic;
pub mod transduction;

pub use error::{Error, Result};
pub use exec::Execution;
pub use fingerprint::Fingerprint;
