//! Image–layer–prompt manifests on disk, prediction directories, and
//! dataset statistics.
//!
//! Layout conventions:
//!
//! * the manifest is a single JSON file; paths inside it are relative to
//!   the manifest's directory,
//! * RGBA layers are 8-bit RGBA PNGs, visibility masks 8-bit grayscale
//!   PNGs thresholded at 128,
//! * predictions live at `<root>/<model>/<sample>/<layer>[_k].png`.

mod manifest;
mod predictions;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{
    load_manifest, save_manifest, AtomicDir, DatasetManifest, LayerEntry, LoadedDataset, LoadedLayer, LoadedSample,
    PromptSpec, Quality, SampleEntry, MANIFEST_VERSION,
};
pub use predictions::{pair_predictions, Coverage, KeyedPair, LayerKey, PairedSet, PredictionSet};
pub use stats::{
    computed_occlusion, instance_distribution, occlusion_rate, quality_audit, size_ratio_histogram, DatasetStats,
    FlagConsistency, Histogram, OcclusionReport, QualityAudit, QualityCounts, DEFAULT_OCCLUSION_THRESHOLD,
};

use crate::codec::CodecError;
use crate::layer::LayerError;
use crate::prompt::PromptError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("sample `{sample}`{}: {reason}", layer.as_ref().map(|l| format!(" layer `{l}`")).unwrap_or_default())]
    InvariantViolation {
        sample: String,
        layer: Option<String>,
        reason: String,
    },
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("unreadable image: {0}")]
    Unreadable(#[from] CodecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{key}: prediction is {got:?}, ground truth is {want:?}")]
    DimensionMismatch {
        key: String,
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error("missing predictions for {} layer(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("prediction `{0}` does not match any manifest layer")]
    UnknownPrediction(String),
    #[error("manifest has no foreground layers")]
    NoForegroundLayers,
}

impl DatasetError {
    pub(crate) fn violation(sample: &str, layer: Option<&str>, reason: impl Into<String>) -> Self {
        DatasetError::InvariantViolation {
            sample: sample.to_string(),
            layer: layer.map(str::to_string),
            reason: reason.into(),
        }
    }

    pub(crate) fn layer_error(sample: &str, layer: &str, e: LayerError) -> Self {
        Self::violation(sample, Some(layer), e.to_string())
    }

    pub(crate) fn prompt_error(sample: &str, layer: &str, e: PromptError) -> Self {
        Self::violation(sample, Some(layer), format!("invalid prompt: {e}"))
    }
}
