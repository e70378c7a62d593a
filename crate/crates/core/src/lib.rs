//! Measurement stack for referring layer decomposition.
//!
//! * [`raster`], [`layer`], [`prompt`], [`render`]: pixel data model,
//!   compositing, prompt canvases and checkerboard targets.
//! * [`embedder`]: perceptual features and distances.
//! * [`metrics`]: preservation, completion and faithfulness axes, amodal
//!   IoU, Passrate@K.
//! * [`hpa`]: min-max normalisation, the HPA aggregate and correlation
//!   against human ratings.
//! * [`elo`]: pairwise human-study engine.
//! * [`dataset`] and [`eval`] (feature `io`): manifests, prediction
//!   directories, statistics and the end-to-end evaluation pipeline.

#[cfg(feature = "io")]
pub mod codec;
#[cfg(feature = "io")]
pub mod dataset;
pub mod elo;
pub mod embedder;
#[cfg(feature = "io")]
pub mod eval;
pub mod hpa;
pub mod layer;
pub mod metrics;
pub mod prompt;
pub mod raster;
pub mod render;
pub mod synth;

pub use layer::{alpha_blend, LayerKind, RgbaLayer};
pub use raster::{AlphaMap, BBox, BinaryMask, Image};
