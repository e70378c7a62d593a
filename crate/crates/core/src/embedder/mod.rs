//! Perceptual feature and distance providers.
//!
//! Every metric goes through the [`Embedder`] trait. [`ReferenceEmbedder`]
//! is a deterministic hand-crafted feature extractor so the whole metric
//! stack can be verified without neural networks; real perceptual models
//! plug in through [`HttpEmbedder`] (feature `http`).

mod reference;
#[cfg(feature = "http")]
mod http;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "http")]
pub use http::{HttpEmbedder, HttpOptions};
pub use reference::{reference_features, resize_area, ReferenceEmbedder, REFERENCE_DIM, REFERENCE_SIDE};

use crate::raster::{same_dims, Image, RasterError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedder backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("embedder `{name}` does not support {wanted}")]
    UnsupportedMode { name: String, wanted: &'static str },
    #[error("cannot embed an empty image")]
    EmptyImage,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderMode {
    Embedding,
    Distance,
    Both,
}

impl EmbedderMode {
    pub fn embeds(self) -> bool {
        matches!(self, EmbedderMode::Embedding | EmbedderMode::Both)
    }

    pub fn measures(self) -> bool {
        matches!(self, EmbedderMode::Distance | EmbedderMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Reference,
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub name: String,
    pub mode: EmbedderMode,
    pub dim: usize,
    pub backend: Backend,
}

impl EmbedderSpec {
    pub fn reference() -> Self {
        EmbedderSpec {
            name: "reference".into(),
            mode: EmbedderMode::Both,
            dim: REFERENCE_DIM,
            backend: Backend::Reference,
        }
    }
}

/// Finite feature vector produced by an embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::ProtocolError("empty feature vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::ProtocolError(format!("non-finite feature at index {i}")));
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sub(&self, other: &FeatureVector) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }
}

/// Perceptual feature/distance provider.
pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    fn embed(&self, img: &Image) -> Result<FeatureVector, EmbedError>;

    /// Perceptual distance between two images of equal size.
    fn distance(&self, a: &Image, b: &Image) -> Result<f64, EmbedError>;

    /// Embeds a batch. Backends with real latency override this to keep
    /// several requests in flight.
    fn embed_many(&self, imgs: &[Image]) -> Result<Vec<FeatureVector>, EmbedError> {
        imgs.iter().map(|img| self.embed(img)).collect()
    }
}

pub(crate) fn require_embedding(spec: &EmbedderSpec) -> Result<(), EmbedError> {
    if spec.mode.embeds() {
        Ok(())
    } else {
        Err(EmbedError::UnsupportedMode {
            name: spec.name.clone(),
            wanted: "embedding",
        })
    }
}

pub(crate) fn require_distance(spec: &EmbedderSpec, a: &Image, b: &Image) -> Result<(), EmbedError> {
    if !spec.mode.measures() {
        return Err(EmbedError::UnsupportedMode {
            name: spec.name.clone(),
            wanted: "pairwise distance",
        });
    }
    same_dims(a.dims(), b.dims())?;
    Ok(())
}

/// L2 distance scaled by `1/√dim`.
pub fn scaled_l2(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let sq: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt() / (a.dim() as f64).sqrt()
}
