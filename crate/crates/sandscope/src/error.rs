use std::path::PathBuf;

use sandscope_core::enrich::EnrichError;
use sandscope_core::ingest::DataError;
use sandscope_core::synth::SynthError;

use crate::io::IoError;
use crate::provider::ProviderError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("missing or stale stage input {path}: {reason}")]
    MissingStageInput { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Labels(#[from] EnrichError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Synth(_) => 2,
            Error::Provider(ProviderError::Config(_)) => 2,
            Error::MissingStageInput { .. } | Error::Io(_) | Error::Data(_) | Error::Labels(_) => 3,
            Error::Provider(_) => 4,
            Error::Invariant(_) => 5,
        }
    }
}
