//! Planar rasters: RGB images, alpha maps and binary masks, plus the
//! geometric helpers shared by every metric (tight boxes, crops, masking).
//!
//! Coordinates put the origin at the top-left corner, `x` grows rightward
//! and `y` downward. Boxes are half-open: `[x0, x1) × [y0, y1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("data length {got} does not match {height}x{width}x{channels}")]
    BadLength {
        height: usize,
        width: usize,
        channels: usize,
        got: usize,
    },
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("box {bbox:?} is out of bounds for {height}x{width}")]
    OutOfBounds {
        bbox: BBox,
        height: usize,
        width: usize,
    },
    #[error("no pixel exceeds alpha threshold {threshold}")]
    EmptyAlpha { threshold: f64 },
    #[error("invalid box {0:?}")]
    InvalidBox(BBox),
}

/// Half-open pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self, RasterError> {
        let b = BBox { x0, y0, x1, y1 };
        if x0 >= x1 || y0 >= y1 {
            return Err(RasterError::InvalidBox(b));
        }
        Ok(b)
    }

    pub fn full(height: usize, width: usize) -> Self {
        BBox {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn check_within(&self, height: usize, width: usize) -> Result<(), RasterError> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 || self.x1 > width || self.y1 > height {
            return Err(RasterError::OutOfBounds {
                bbox: *self,
                height,
                width,
            });
        }
        Ok(())
    }
}

fn check_unit(data: &[f64]) -> Result<(), RasterError> {
    match data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        Some((index, &value)) => Err(RasterError::OutOfRange { index, value }),
        None => Ok(()),
    }
}

fn crop_plane<T: Copy>(data: &[T], width: usize, channels: usize, b: &BBox) -> Vec<T> {
    let mut out = Vec::with_capacity(b.area() * channels);
    for y in b.y0..b.y1 {
        let start = (y * width + b.x0) * channels;
        let end = (y * width + b.x1) * channels;
        out.extend_from_slice(&data[start..end]);
    }
    out
}

/// RGB image with channels in `[0, 1]`, stored row-major and interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if data.len() != height * width * 3 {
            return Err(RasterError::BadLength {
                height,
                width,
                channels: 3,
                got: data.len(),
            });
        }
        check_unit(&data)?;
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let rgb = rgb.map(|c| c.clamp(0.0, 1.0));
        let data = std::iter::repeat_n(rgb, height * width).flatten().collect();
        Image {
            height,
            width,
            data,
        }
    }

    /// Builds an image from a per-pixel closure `(x, y) -> rgb`; values are clamped.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|c| c.clamp(0.0, 1.0)));
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    pub fn crop(&self, b: BBox) -> Result<Self, RasterError> {
        b.check_within(self.height, self.width)?;
        Ok(Image {
            height: b.height(),
            width: b.width(),
            data: crop_plane(&self.data, self.width, 3, &b),
        })
    }

    /// Zeroes every pixel outside `mask`.
    pub fn apply_visibility(&self, mask: &BinaryMask) -> Result<Self, RasterError> {
        same_dims(self.dims(), mask.dims())?;
        let mut data = self.data.clone();
        for (px, &keep) in data.chunks_exact_mut(3).zip(mask.data()) {
            if !keep {
                px.fill(0.0);
            }
        }
        Ok(Image {
            height: self.height,
            width: self.width,
            data,
        })
    }
}

/// Single-channel opacity map in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl AlphaMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if data.len() != height * width {
            return Err(RasterError::BadLength {
                height,
                width,
                channels: 1,
                got: data.len(),
            });
        }
        check_unit(&data)?;
        Ok(AlphaMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        AlphaMap {
            height,
            width,
            data: vec![value.clamp(0.0, 1.0); height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        AlphaMap {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_opaque(&self) -> bool {
        self.data.iter().all(|&a| a == 1.0)
    }

    /// Pixels with alpha strictly above `threshold`.
    pub fn support(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&a| a > threshold).collect(),
        }
    }

    /// Minimal box containing every pixel with alpha strictly above `threshold`.
    pub fn tight_bbox(&self, threshold: f64) -> Result<BBox, RasterError> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            for (x, &a) in row.iter().enumerate() {
                if a > threshold {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return Err(RasterError::EmptyAlpha { threshold });
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    pub fn crop(&self, b: BBox) -> Result<Self, RasterError> {
        b.check_within(self.height, self.width)?;
        Ok(AlphaMap {
            height: b.height(),
            width: b.width(),
            data: crop_plane(&self.data, self.width, 1, &b),
        })
    }
}

/// Binary mask; `true` marks a set pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self, RasterError> {
        if data.len() != height * width {
            return Err(RasterError::BadLength {
                height,
                width,
                channels: 1,
                got: data.len(),
            });
        }
        Ok(BinaryMask {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn crop(&self, b: BBox) -> Result<Self, RasterError> {
        b.check_within(self.height, self.width)?;
        Ok(BinaryMask {
            height: b.height(),
            width: b.width(),
            data: crop_plane(&self.data, self.width, 1, &b),
        })
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<Self, RasterError> {
        same_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<Self, RasterError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<Self, RasterError> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> Result<Self, RasterError> {
        self.zip_with(other, |a, b| a && !b)
    }
}

pub(crate) fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<(), RasterError> {
    if a != b {
        return Err(RasterError::DimensionMismatch { a, b });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |x, y| {
            let v = (y * w + x) as f64 / (h * w) as f64;
            [v, v * 0.5, 1.0 - v]
        })
    }

    #[test]
    fn tight_bbox_single_pixel() {
        let mut data = vec![0.0; 16];
        data[3 * 4 + 1] = 0.7;
        let a = AlphaMap::new(4, 4, data).unwrap();
        assert_eq!(a.tight_bbox(0.0).unwrap(), BBox::new(1, 3, 2, 4).unwrap());
    }

    #[test]
    fn tight_bbox_full_and_empty() {
        assert_eq!(
            AlphaMap::filled(8, 8, 1.0).tight_bbox(0.0).unwrap(),
            BBox::full(8, 8)
        );
        assert!(matches!(
            AlphaMap::filled(5, 5, 0.0).tight_bbox(0.0),
            Err(RasterError::EmptyAlpha { .. })
        ));
    }

    #[test]
    fn tight_bbox_threshold() {
        let a = AlphaMap::from_fn(4, 4, |x, _| if x == 0 { 0.2 } else if x == 3 { 0.9 } else { 0.0 });
        assert_eq!(a.tight_bbox(0.0).unwrap(), BBox::new(0, 0, 4, 4).unwrap());
        assert_eq!(a.tight_bbox(0.5).unwrap(), BBox::new(3, 0, 4, 4).unwrap());
    }

    #[test]
    fn crop_identity_and_center() {
        let img = ramp(4, 4);
        assert_eq!(img.crop(BBox::full(4, 4)).unwrap(), img);
        let c = img.crop(BBox::new(1, 1, 3, 3).unwrap()).unwrap();
        assert_eq!(c.dims(), (2, 2));
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
        assert_eq!(c.pixel(1, 1), img.pixel(2, 2));
        assert_eq!(c.pixel(1, 0), img.pixel(2, 1));
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = ramp(4, 4);
        let b = BBox::new(2, 0, 5, 2).unwrap();
        assert!(matches!(img.crop(b), Err(RasterError::OutOfBounds { .. })));
        assert!(matches!(
            BinaryMask::filled(4, 4, true).crop(b),
            Err(RasterError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn visibility_masking() {
        let img = Image::filled(4, 4, [0.5; 3]);
        assert_eq!(img.apply_visibility(&BinaryMask::filled(4, 4, true)).unwrap(), img);
        assert_eq!(
            img.apply_visibility(&BinaryMask::filled(4, 4, false)).unwrap(),
            Image::filled(4, 4, [0.0; 3])
        );
        let checker = BinaryMask::from_fn(4, 4, |x, y| (x + y) % 2 == 0);
        let out = img.apply_visibility(&checker).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let want = if (x + y) % 2 == 0 { 0.5 } else { 0.0 };
                assert_eq!(out.pixel(x, y), [want; 3]);
            }
        }
        assert_eq!(out.apply_visibility(&checker).unwrap(), out);
        assert!(img.apply_visibility(&BinaryMask::filled(3, 4, true)).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Image::new(1, 1, vec![0.0, 1.2, 0.0]).is_err());
        assert!(Image::new(1, 2, vec![0.0; 3]).is_err());
        assert!(AlphaMap::new(1, 1, vec![-0.1]).is_err());
    }

    #[test]
    fn crop_then_rebox_covers_extent() {
        let a = AlphaMap::from_fn(10, 12, |x, y| if (3..7).contains(&x) && (2..9).contains(&y) && x != y { 0.5 } else { 0.0 });
        let b = a.tight_bbox(0.0).unwrap();
        let c = a.crop(b).unwrap();
        assert_eq!(c.tight_bbox(0.0).unwrap(), BBox::full(c.height(), c.width()));
    }
}
