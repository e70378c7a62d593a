//! 8-bit PNG conversion. Channels map to disk as `round(v·255)` and back as
//! `v/255`, so a decode→encode cycle is bit-exact.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage, RgbaImage};
use thiserror::Error;

use crate::raster::{AlphaMap, BinaryMask, Image};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{0}")]
    Encode(#[from] image::ImageError),
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dequantize(v: u8) -> f64 {
    v as f64 / 255.0
}

pub fn rgb_to_image(buf: &RgbImage) -> Image {
    let (w, h) = buf.dimensions();
    Image::new(h as usize, w as usize, buf.as_raw().iter().map(|&v| dequantize(v)).collect())
        .expect("8-bit samples are always in range")
}

pub fn image_to_rgb(img: &Image) -> RgbImage {
    RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.data().iter().map(|&v| quantize(v)).collect(),
    )
    .expect("buffer length matches dimensions")
}

/// Splits an RGBA buffer into colour and alpha planes.
pub fn split_rgba(buf: &RgbaImage) -> (Image, AlphaMap) {
    let (w, h) = buf.dimensions();
    let (h, w) = (h as usize, w as usize);
    let mut rgb = Vec::with_capacity(h * w * 3);
    let mut alpha = Vec::with_capacity(h * w);
    for px in buf.as_raw().chunks_exact(4) {
        rgb.extend(px[..3].iter().map(|&v| dequantize(v)));
        alpha.push(dequantize(px[3]));
    }
    (
        Image::new(h, w, rgb).expect("8-bit samples are always in range"),
        AlphaMap::new(h, w, alpha).expect("8-bit samples are always in range"),
    )
}

pub fn join_rgba(rgb: &Image, alpha: &AlphaMap) -> RgbaImage {
    let mut raw = Vec::with_capacity(rgb.height() * rgb.width() * 4);
    for (px, &a) in rgb.data().chunks_exact(3).zip(alpha.data()) {
        raw.extend(px.iter().map(|&v| quantize(v)));
        raw.push(quantize(a));
    }
    RgbaImage::from_raw(rgb.width() as u32, rgb.height() as u32, raw).expect("buffer length matches dimensions")
}

/// Grayscale mask: values `>= 128` are set.
pub fn gray_to_mask(buf: &GrayImage) -> BinaryMask {
    let (w, h) = buf.dimensions();
    BinaryMask::new(h as usize, w as usize, buf.as_raw().iter().map(|&v| v >= 128).collect())
        .expect("buffer length matches dimensions")
}

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.data().iter().map(|&v| if v { 255 } else { 0 }).collect(),
    )
    .expect("buffer length matches dimensions")
}

fn open(path: &Path) -> Result<image::DynamicImage, CodecError> {
    image::open(path).map_err(|source| CodecError::Image {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_rgb(path: &Path) -> Result<Image, CodecError> {
    Ok(rgb_to_image(&open(path)?.to_rgb8()))
}

pub fn read_rgba(path: &Path) -> Result<(Image, AlphaMap), CodecError> {
    Ok(split_rgba(&open(path)?.to_rgba8()))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, CodecError> {
    Ok(gray_to_mask(&open(path)?.to_luma8()))
}

fn save_err(path: &Path) -> impl FnOnce(image::ImageError) -> CodecError + '_ {
    move |source| CodecError::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_rgb(path: &Path, img: &Image) -> Result<(), CodecError> {
    image_to_rgb(img).save_with_format(path, ImageFormat::Png).map_err(save_err(path))
}

pub fn write_rgba(path: &Path, rgb: &Image, alpha: &AlphaMap) -> Result<(), CodecError> {
    join_rgba(rgb, alpha).save_with_format(path, ImageFormat::Png).map_err(save_err(path))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), CodecError> {
    mask_to_gray(mask).save_with_format(path, ImageFormat::Png).map_err(save_err(path))
}

pub fn encode_rgb_png(img: &Image) -> Result<Vec<u8>, CodecError> {
    let mut out = Cursor::new(Vec::new());
    image_to_rgb(img).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn encode_rgba_png(rgb: &Image, alpha: &AlphaMap) -> Result<Vec<u8>, CodecError> {
    let mut out = Cursor::new(Vec::new());
    join_rgba(rgb, alpha).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<Image, CodecError> {
    Ok(rgb_to_image(&image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn png_round_trip_is_bit_exact(raw in prop::collection::vec(any::<u8>(), 5 * 7 * 3)) {
            let buf = RgbImage::from_raw(7, 5, raw.clone()).unwrap();
            let img = rgb_to_image(&buf);
            let back = decode_rgb_png(&encode_rgb_png(&img).unwrap()).unwrap();
            prop_assert_eq!(image_to_rgb(&back).into_raw(), raw);
        }
    }

    #[test]
    fn mask_threshold() {
        let buf = GrayImage::from_raw(4, 1, vec![0, 127, 128, 255]).unwrap();
        assert_eq!(gray_to_mask(&buf).data(), &[false, false, true, true]);
    }

    #[test]
    fn rgba_split_join() {
        let raw: Vec<u8> = (0..24).map(|v| (v * 10) as u8).collect();
        let buf = RgbaImage::from_raw(3, 2, raw.clone()).unwrap();
        let (rgb, a) = split_rgba(&buf);
        assert_eq!(join_rgba(&rgb, &a).into_raw(), raw);
    }
}
