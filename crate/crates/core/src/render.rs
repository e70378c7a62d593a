//! Checkerboard backdrops and checkerboard-composited training targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::layer::{LayerError, RgbaLayer};
use crate::raster::Image;

pub const CHECKER_LIGHT: [f64; 3] = [1.0, 1.0, 1.0];
pub const CHECKER_GRAY: [f64; 3] = [0.8, 0.8, 0.8];
pub const DEFAULT_CELL: usize = 16;
pub const DEFAULT_JITTER: f64 = 0.05;
pub const MAX_JITTER: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("checkerboard cell size must be at least 1")]
    ZeroCell,
    #[error("jitter {0} outside [0, {MAX_JITTER}]")]
    BadJitter(f64),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkerboard {
    pub cell: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for Checkerboard {
    fn default() -> Self {
        Checkerboard {
            cell: DEFAULT_CELL,
            jitter: DEFAULT_JITTER,
            seed: 0,
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell_seed(seed: u64, row: usize, col: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ row as u64) ^ (col as u64).rotate_left(32))
}

/// Base colour of checkerboard cell `(row, col)`; the top-left cell is white.
pub fn checker_base(row: usize, col: usize) -> [f64; 3] {
    if (row + col).is_multiple_of(2) {
        CHECKER_LIGHT
    } else {
        CHECKER_GRAY
    }
}

/// Renders a gray/white checkerboard. Each cell's colour is shifted per
/// channel by a uniform offset in `[-jitter, jitter]` drawn from a generator
/// keyed on `(seed, row, col)`, then clamped.
pub fn render_checkerboard(height: usize, width: usize, board: Checkerboard) -> Result<Image, RenderError> {
    if board.cell == 0 {
        return Err(RenderError::ZeroCell);
    }
    if !(0.0..=MAX_JITTER).contains(&board.jitter) {
        return Err(RenderError::BadJitter(board.jitter));
    }
    let rows = height.div_ceil(board.cell);
    let cols = width.div_ceil(board.cell);
    let mut colors = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut color = checker_base(r, c);
            if board.jitter > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(board.seed, r, c));
                for ch in color.iter_mut() {
                    *ch = (*ch + rng.random_range(-board.jitter..=board.jitter)).clamp(0.0, 1.0);
                }
            }
            colors.push(color);
        }
    }
    Ok(Image::from_fn(height, width, |x, y| {
        colors[(y / board.cell) * cols + x / board.cell]
    }))
}

/// Composites `layer` over a jittered checkerboard with the default cell and
/// jitter settings.
pub fn make_training_target(layer: &RgbaLayer, seed: u64) -> Result<Image, RenderError> {
    make_training_target_with(
        layer,
        Checkerboard {
            seed,
            ..Checkerboard::default()
        },
    )
}

pub fn make_training_target_with(layer: &RgbaLayer, board: Checkerboard) -> Result<Image, RenderError> {
    let (h, w) = layer.dims();
    let bg = render_checkerboard(h, w, board)?;
    Ok(layer.blend_over(&bg)?)
}
