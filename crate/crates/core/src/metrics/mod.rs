//! The three evaluation axes (preservation, completion, faithfulness) plus
//! the Fréchet numerics behind faithfulness, amodal IoU, and Passrate@K.

mod axes;
mod frechet;
mod iou;
mod passrate;

use thiserror::Error;

pub use axes::{
    completion_similarity, fidelity_fid, mean_completion, mean_preservation, preservation_distance, Completion, LayerPair,
    DEFAULT_COMPLETION_EPS,
};
pub use frechet::{fit_gaussian, frechet_distance, GaussianStats, DEFAULT_FID_REG};
pub use iou::{mask_iou, miou_full, miou_occ};
pub use passrate::{passrate_at_k, PassVerdict};

use crate::embedder::EmbedError;
use crate::layer::LayerError;
use crate::raster::RasterError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("ground-truth layer has no visible pixel")]
    EmptyVisibility,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("list lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ground truth and prediction have different layer kinds")]
    KindMismatch,
    #[error("foreground layer has no background image to blend over")]
    MissingBackground,
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigendecomposition did not converge")]
    NumericalFailure,
    #[error("no verdicts for k = {0}")]
    NoVerdicts(usize),
    #[error("every sample was skipped; completion is undefined")]
    AllSkipped,
}
