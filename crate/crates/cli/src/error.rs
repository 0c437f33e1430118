use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] transduce_core::Error),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("missing artifact {}: {message}", path.display())]
    MissingArtifact { path: PathBuf, message: String },
    #[error("{artifact} was produced under config {found}, current config is {expected}")]
    Fingerprint {
        artifact: String,
        expected: String,
        found: String,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config { .. } => "E_CONFIG",
            CliError::MissingArtifact { .. } => "E_MISSING_ARTIFACT",
            CliError::Fingerprint { .. } => "E_FINGERPRINT",
        }
    }
}
