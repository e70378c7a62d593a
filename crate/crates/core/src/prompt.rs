//! Referring prompts and their RGB canvas encoding.
//!
//! Spatial prompts are rasterised into a three-channel canvas: solid blue for
//! the background, a green box, a red mask region, and a grayscale gaussian
//! bump for a point.

use thiserror::Error;

use crate::raster::{BBox, BinaryMask, Image};

/// Gaussian width of a point prompt as a fraction of the image diagonal.
pub const POINT_SIGMA_FRACTION: f64 = 0.015;

pub const BACKGROUND_COLOR: [f64; 3] = [0.0, 0.0, 1.0];
pub const BOX_COLOR: [f64; 3] = [0.0, 1.0, 0.0];
pub const MASK_COLOR: [f64; 3] = [1.0, 0.0, 0.0];

#[derive(Debug, Clone, PartialEq)]
pub enum Prompt {
    Point { x: usize, y: usize },
    Box(BBox),
    Mask(BinaryMask),
    Text(String),
    Background,
    Combo { text: String, spatial: Box<Prompt> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("point ({x}, {y}) lies outside {height}x{width}")]
    PointOutOfBounds {
        x: usize,
        y: usize,
        height: usize,
        width: usize,
    },
    #[error("box {0:?} lies outside the image")]
    BoxOutOfBounds(BBox),
    #[error("mask is {got:?}, image is {want:?}")]
    MaskDims { got: (usize, usize), want: (usize, usize) },
    #[error("prompt has no spatial component")]
    NoSpatialComponent,
    #[error("combo prompts need exactly one spatial part")]
    BadCombo,
}

impl Prompt {
    /// Checks the prompt against an image of `height × width`.
    pub fn validate(&self, height: usize, width: usize) -> Result<(), PromptError> {
        match self {
            Prompt::Point { x, y } => {
                if *x >= width || *y >= height {
                    return Err(PromptError::PointOutOfBounds {
                        x: *x,
                        y: *y,
                        height,
                        width,
                    });
                }
            }
            Prompt::Box(b) => {
                if b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > width || b.y1 > height {
                    return Err(PromptError::BoxOutOfBounds(*b));
                }
            }
            Prompt::Mask(m) => {
                if m.dims() != (height, width) {
                    return Err(PromptError::MaskDims {
                        got: m.dims(),
                        want: (height, width),
                    });
                }
            }
            Prompt::Text(_) | Prompt::Background => {}
            Prompt::Combo { spatial, .. } => match spatial.as_ref() {
                Prompt::Text(_) | Prompt::Combo { .. } => return Err(PromptError::BadCombo),
                p => p.validate(height, width)?,
            },
        }
        Ok(())
    }

    /// The spatial part of the prompt, if any.
    pub fn spatial(&self) -> Option<&Prompt> {
        match self {
            Prompt::Text(_) => None,
            Prompt::Combo { spatial, .. } => spatial.spatial(),
            p => Some(p),
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Prompt::Text(t) | Prompt::Combo { text: t, .. } => Some(t),
            _ => None,
        }
    }
}

/// Encodes a spatial prompt as an RGB canvas of `height × width`.
pub fn render_prompt_canvas(prompt: &Prompt, height: usize, width: usize) -> Result<Image, PromptError> {
    prompt.validate(height, width)?;
    let spatial = prompt.spatial().ok_or(PromptError::NoSpatialComponent)?;
    Ok(match spatial {
        Prompt::Background => Image::filled(height, width, BACKGROUND_COLOR),
        Prompt::Box(b) => Image::from_fn(height, width, |x, y| if b.contains(x, y) { BOX_COLOR } else { [0.0; 3] }),
        Prompt::Mask(m) => Image::from_fn(height, width, |x, y| if m.get(x, y) { MASK_COLOR } else { [0.0; 3] }),
        Prompt::Point { x: px, y: py } => {
            let diag = ((height * height + width * width) as f64).sqrt();
            let sigma = POINT_SIGMA_FRACTION * diag;
            let denom = 2.0 * sigma * sigma;
            Image::from_fn(height, width, |x, y| {
                let dx = x as f64 - *px as f64;
                let dy = y as f64 - *py as f64;
                let v = (-(dx * dx + dy * dy) / denom).exp();
                [v; 3]
            })
        }
        Prompt::Text(_) | Prompt::Combo { .. } => unreachable!("spatial() never yields text or combo"),
    })
}
