use std::path::PathBuf;

use layerbench::dataset::DatasetError;
use layerbench::elo::{EloError, LedgerFileError};
use layerbench::embedder::EmbedError;
use layerbench::eval::EvalError;
use layerbench::hpa::{BoundsFileError, HpaError};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bounds required: pass --bounds FILE or --compute-bounds")]
    BoundsRequired,
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Hpa(#[from] HpaError),
    #[error(transparent)]
    BoundsFile(#[from] BoundsFileError),
    #[error(transparent)]
    Ledger(#[from] LedgerFileError),
    #[error(transparent)]
    Elo(#[from] EloError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("ledger {0} is locked by another process")]
    LedgerLocked(PathBuf),
    #[error("server error: {0}")]
    Server(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Stable machine-readable error name.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::BoundsRequired => "BoundsRequired",
            CliError::InvalidArgument(_) => "InvalidArgument",
            CliError::Dataset(e) | CliError::Eval(EvalError::Dataset(e)) => dataset_kind(e),
            CliError::Eval(EvalError::EmptySubset { .. }) => "EmptySubset",
            CliError::Eval(_) => "MetricError",
            CliError::Hpa(HpaError::ModelSetMismatch(_)) => "ModelSetMismatch",
            CliError::Hpa(_) => "HpaError",
            CliError::BoundsFile(_) => "InvalidBounds",
            CliError::Ledger(_) => "LedgerError",
            CliError::Elo(_) => "EloError",
            CliError::Embed(EmbedError::BackendUnavailable(_)) => "BackendUnavailable",
            CliError::Embed(_) => "EmbedError",
            CliError::Io { .. } => "Io",
            CliError::Json { .. } => "ParseError",
            CliError::LedgerLocked(_) => "LedgerLocked",
            CliError::Server(_) => "ServerError",
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}}).to_string()
    }
}

fn dataset_kind(e: &DatasetError) -> &'static str {
    match e {
        DatasetError::Parse { .. } => "ParseError",
        DatasetError::MissingFile(_) => "MissingFile",
        DatasetError::InvariantViolation { .. } => "InvariantViolation",
        DatasetError::UnsupportedVersion(_) => "UnsupportedVersion",
        DatasetError::Unreadable(_) => "Unreadable",
        DatasetError::Io { .. } => "Io",
        DatasetError::DimensionMismatch { .. } => "DimensionMismatch",
        DatasetError::MissingPredictions(_) => "MissingPredictions",
        DatasetError::UnknownPrediction(_) => "UnknownPrediction",
        DatasetError::NoForegroundLayers => "NoForegroundLayers",
    }
}
