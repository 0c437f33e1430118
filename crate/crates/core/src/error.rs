use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Every variant maps onto a stable machine-readable code via [`Error::code`],
/// which the command-line front end prints on failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse {field} value `{value}`")]
    RowParse {
        row: usize,
        field: String,
        value: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("duplicate compositions without a dedup key: {}", .0.join(", "))]
    MissingDedupKey(Vec<String>),

    #[error("record `{id}` has non-positive target {value}; cannot take log10")]
    NonPositiveTarget { id: String, value: f64 },

    #[error("split error: {0}")]
    Split(String),

    #[error("formula `{formula}` at offset {offset}: {message}")]
    Formula {
        formula: String,
        offset: usize,
        message: String,
    },

    #[error("element `{0}` is not present in the element table")]
    UnknownElement(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stale activation trace: parameters changed since the forward pass")]
    StaleTrace,

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("no valid training pairs: all training targets are identical")]
    NoPairs,

    #[error("exhaustive difference index needs {pairs} pairs which exceeds the cap of {cap}; use sampled mode")]
    IndexCap { pairs: usize, cap: usize },

    #[error("difference index is empty")]
    EmptyIndex,

    #[error("scaler checksum mismatch: model was trained with {expected}, features use {got}")]
    ScalerMismatch { expected: String, got: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    /// Short stable error code, e.g. `E_SCHEMA`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
            Error::MissingColumn(_) => "E_SCHEMA",
            Error::RowParse { .. } => "E_PARSE",
            Error::DuplicateId(_) => "E_DUPLICATE_ID",
            Error::MissingDedupKey(_) => "E_DEDUP",
            Error::NonPositiveTarget { .. } => "E_LOG10",
            Error::Split(_) => "E_SPLIT",
            Error::Formula { .. } => "E_FORMULA",
            Error::UnknownElement(_) => "E_ELEMENT",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::StaleTrace => "E_TRACE",
            Error::NonFiniteGradient(_) => "E_GRADIENT",
            Error::Diverged { .. } => "E_DIVERGED",
            Error::NoPairs => "E_NO_PAIRS",
            Error::IndexCap { .. } => "E_INDEX_CAP",
            Error::EmptyIndex => "E_EMPTY_INDEX",
            Error::ScalerMismatch { .. } => "E_SCALER_MISMATCH",
            Error::Singular(_) => "E_SINGULAR",
            Error::Empty(_) => "E_EMPTY",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
