use super::{require_distance, scaled_l2, EmbedError, Embedder, EmbedderSpec, FeatureVector};
use crate::raster::Image;

/// Working resolution of the reference features.
pub const REFERENCE_SIDE: usize = 64;
pub const REFERENCE_DIM: usize = 64;

const GRID: usize = 4;
const GRAD_BINS: usize = 13;
const GRAD_RANGE: f64 = 2.0;

/// Deterministic 64-dim feature extractor:
///
/// * 48 per-channel means over a 4×4 grid (row-major cells, RGB per cell),
/// * 3 per-channel population standard deviations,
/// * a 13-bin mass-normalised histogram of luminance gradient magnitude
///   (central differences, edge-clamped, bins uniform over `[0, 2]`),
///
/// all computed after an area-average resize to 64×64.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    spec: EmbedderSpec,
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        ReferenceEmbedder {
            spec: EmbedderSpec::reference(),
        }
    }
}

impl ReferenceEmbedder {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Embedder for ReferenceEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, img: &Image) -> Result<FeatureVector, EmbedError> {
        if img.is_empty() {
            return Err(EmbedError::EmptyImage);
        }
        FeatureVector::new(reference_features(img))
    }

    fn distance(&self, a: &Image, b: &Image) -> Result<f64, EmbedError> {
        require_distance(&self.spec, a, b)?;
        Ok(scaled_l2(&self.embed(a)?, &self.embed(b)?))
    }
}

/// Per-axis overlap weights of output cells with source pixels.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|j| {
                    let w = hi.min((j + 1) as f64) - lo.max(j as f64);
                    (w > 0.0).then_some((j, w / scale))
                })
                .collect()
        })
        .collect()
}

/// Box-filter resize: each output pixel is the area-weighted mean of the
/// source pixels it covers.
pub fn resize_area(img: &Image, height: usize, width: usize) -> Image {
    if img.dims() == (height, width) {
        return img.clone();
    }
    let rows = area_weights(img.height(), height);
    let cols = area_weights(img.width(), width);
    Image::from_fn(height, width, |x, y| {
        let mut acc = [0.0; 3];
        for &(sy, wy) in &rows[y] {
            for &(sx, wx) in &cols[x] {
                let p = img.pixel(sx, sy);
                for c in 0..3 {
                    acc[c] += wy * wx * p[c];
                }
            }
        }
        acc
    })
}

pub fn reference_features(img: &Image) -> Vec<f64> {
    let n = REFERENCE_SIDE;
    let small = resize_area(img, n, n);
    let data = small.data();
    let mut out = Vec::with_capacity(REFERENCE_DIM);

    let cell = n / GRID;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let mut acc = [0.0; 3];
            for y in gy * cell..(gy + 1) * cell {
                for x in gx * cell..(gx + 1) * cell {
                    let i = (y * n + x) * 3;
                    for c in 0..3 {
                        acc[c] += data[i + c];
                    }
                }
            }
            out.extend(acc.map(|s| s / (cell * cell) as f64));
        }
    }

    let count = (n * n) as f64;
    for c in 0..3 {
        let mean = data.iter().skip(c).step_by(3).sum::<f64>() / count;
        let var = data
            .iter()
            .skip(c)
            .step_by(3)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / count;
        out.push(var.sqrt());
    }

    let luma: Vec<f64> = data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    let at = |x: usize, y: usize| luma[y * n + x];
    let mut hist = [0.0; GRAD_BINS];
    let bin_width = GRAD_RANGE / GRAD_BINS as f64;
    for y in 0..n {
        for x in 0..n {
            let gx = at((x + 1).min(n - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(n - 1)) - at(x, y.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            let bin = ((mag / bin_width) as usize).min(GRAD_BINS - 1);
            hist[bin] += 1.0;
        }
    }
    out.extend(hist.map(|h| h / count));
    out
}
