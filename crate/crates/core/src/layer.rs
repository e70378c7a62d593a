//! RGBA layers and alpha compositing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{same_dims, AlphaMap, BinaryMask, Image, RasterError};

/// Fraction of visible pixels that may fall outside the alpha support before
/// a layer is rejected. Up to this share the offending visibility pixels are
/// cleared instead.
pub const VISIBILITY_CLIP_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Foreground,
    Background,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("background layer alpha must be all ones")]
    BackgroundNotOpaque,
    #[error("{outside} of {visible} visible pixels lie outside the alpha support")]
    VisibilityOutsideSupport { outside: usize, visible: usize },
}

/// One decomposed layer: colour, opacity, and which pixels were visible in
/// the source photograph.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaLayer {
    rgb: Image,
    alpha: AlphaMap,
    visibility: BinaryMask,
    kind: LayerKind,
}

impl RgbaLayer {
    /// Strict constructor: every invariant must already hold.
    pub fn new(rgb: Image, alpha: AlphaMap, visibility: BinaryMask, kind: LayerKind) -> Result<Self, LayerError> {
        check_dims(&rgb, &alpha, &visibility)?;
        if kind == LayerKind::Background && !alpha.is_opaque() {
            return Err(LayerError::BackgroundNotOpaque);
        }
        let outside = count_outside(&alpha, &visibility);
        if outside > 0 {
            return Err(LayerError::VisibilityOutsideSupport {
                outside,
                visible: visibility.count(),
            });
        }
        Ok(RgbaLayer {
            rgb,
            alpha,
            visibility,
            kind,
        })
    }

    /// Loader-side constructor. Background alpha is forced opaque, and up to
    /// [`VISIBILITY_CLIP_TOLERANCE`] of visible pixels lying outside the alpha
    /// support are cleared. Returns the layer and the number of cleared pixels.
    pub fn new_lenient(
        rgb: Image,
        alpha: AlphaMap,
        mut visibility: BinaryMask,
        kind: LayerKind,
    ) -> Result<(Self, usize), LayerError> {
        check_dims(&rgb, &alpha, &visibility)?;
        let alpha = match kind {
            LayerKind::Background => AlphaMap::filled(alpha.height(), alpha.width(), 1.0),
            LayerKind::Foreground => alpha,
        };
        let outside = count_outside(&alpha, &visibility);
        if outside > 0 {
            let visible = visibility.count();
            if outside as f64 > VISIBILITY_CLIP_TOLERANCE * visible as f64 {
                return Err(LayerError::VisibilityOutsideSupport { outside, visible });
            }
            for y in 0..alpha.height() {
                for x in 0..alpha.width() {
                    if visibility.get(x, y) && alpha.get(x, y) <= 0.0 {
                        visibility.set(x, y, false);
                    }
                }
            }
            log::warn!("cleared {outside} of {visible} visible pixels outside the alpha support");
        }
        Ok((
            RgbaLayer {
                rgb,
                alpha,
                visibility,
                kind,
            },
            outside,
        ))
    }

    /// Fully opaque layer covering the whole frame.
    pub fn background(rgb: Image, visibility: BinaryMask) -> Result<Self, LayerError> {
        let alpha = AlphaMap::filled(rgb.height(), rgb.width(), 1.0);
        Self::new(rgb, alpha, visibility, LayerKind::Background)
    }

    pub fn rgb(&self) -> &Image {
        &self.rgb
    }

    pub fn alpha(&self) -> &AlphaMap {
        &self.alpha
    }

    pub fn visibility(&self) -> &BinaryMask {
        &self.visibility
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn dims(&self) -> (usize, usize) {
        self.rgb.dims()
    }

    /// Same alpha, visibility and kind with different colour content.
    pub fn with_rgb(&self, rgb: Image) -> Result<Self, LayerError> {
        same_dims(rgb.dims(), self.dims())?;
        Ok(RgbaLayer {
            rgb,
            ..self.clone()
        })
    }

    /// Composites this layer over `background`: `rgb·α + bg·(1−α)`.
    pub fn blend_over(&self, background: &Image) -> Result<Image, LayerError> {
        Ok(alpha_blend(&self.rgb, &self.alpha, background)?)
    }
}

fn check_dims(rgb: &Image, alpha: &AlphaMap, vis: &BinaryMask) -> Result<(), RasterError> {
    same_dims(rgb.dims(), alpha.dims())?;
    same_dims(rgb.dims(), vis.dims())
}

fn count_outside(alpha: &AlphaMap, vis: &BinaryMask) -> usize {
    alpha
        .data()
        .iter()
        .zip(vis.data())
        .filter(|(&a, &v)| v && a <= 0.0)
        .count()
}

/// Straight-alpha compositing of `rgb` with opacity `alpha` over `background`.
pub fn alpha_blend(rgb: &Image, alpha: &AlphaMap, background: &Image) -> Result<Image, RasterError> {
    same_dims(rgb.dims(), alpha.dims())?;
    same_dims(rgb.dims(), background.dims())?;
    let mut data = Vec::with_capacity(rgb.data().len());
    for ((fg, bg), &a) in rgb
        .data()
        .chunks_exact(3)
        .zip(background.data().chunks_exact(3))
        .zip(alpha.data())
    {
        for c in 0..3 {
            data.push((fg[c] * a + bg[c] * (1.0 - a)).clamp(0.0, 1.0));
        }
    }
    Image::new(rgb.height(), rgb.width(), data)
}
