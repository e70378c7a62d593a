//! Procedural scenes with known layer decompositions, plus deterministic
//! corruptions that stand in for models of graded quality.
//!
//! All pixel values are multiples of 1/255, so writing a scene to PNG and
//! reading it back reproduces it exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layer::{alpha_blend, LayerKind, RgbaLayer};
use crate::prompt::Prompt;
use crate::raster::{AlphaMap, BinaryMask, Image};
use crate::render::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthQuality {
    Good,
    Neutral,
    Poor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    /// Foreground counts, cycled over the samples.
    pub foreground_pattern: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 20 samples and 35 layers (15 foreground, 20 background).
    fn default() -> Self {
        SynthConfig {
            samples: 20,
            height: 96,
            width: 96,
            foreground_pattern: vec![2, 0, 1, 0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthLayer {
    pub id: String,
    pub layer: RgbaLayer,
    pub prompts: Vec<Prompt>,
    pub quality: SynthQuality,
    pub salient: Option<bool>,
    pub occluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub image: Image,
    pub background: Image,
    /// Background first, then foreground layers back to front.
    pub layers: Vec<SynthLayer>,
}

pub(crate) fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn quantize3(c: [f64; 3]) -> [f64; 3] {
    c.map(quantize)
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
}

impl Shape {
    /// Approximate signed distance in pixels, negative inside.
    fn distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let r = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
                (r - 1.0) * rx.min(ry)
            }
            Shape::Rect { cx, cy, hx, hy } => ((x - cx).abs() - hx).max((y - cy).abs() - hy),
        }
    }

    fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Ellipse { cx, cy, .. } | Shape::Rect { cx, cy, .. } => (cx, cy),
        }
    }

    fn random(rng: &mut ChaCha8Rng, cx: f64, cy: f64, size: f64) -> Shape {
        let a = size * rng.random_range(0.7..1.0);
        let b = size * rng.random_range(0.55..0.9);
        if rng.random_bool(0.5) {
            Shape::Ellipse { cx, cy, rx: a, ry: b }
        } else {
            Shape::Rect { cx, cy, hx: a, hy: b }
        }
    }
}

const FEATHER: f64 = 1.5;

fn shape_alpha(shape: &Shape, h: usize, w: usize) -> AlphaMap {
    AlphaMap::from_fn(h, w, |x, y| {
        quantize(0.5 - shape.distance(x as f64 + 0.5, y as f64 + 0.5) / FEATHER)
    })
}

/// Striped texture so occluded content differs from what is visible.
fn texture(rng: &mut ChaCha8Rng, h: usize, w: usize, alpha: Option<&AlphaMap>) -> Image {
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.85));
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let freq = rng.random_range(0.15..0.45);
    let (c, s) = (theta.cos(), theta.sin());
    Image::from_fn(h, w, |x, y| {
        if alpha.is_some_and(|a| a.get(x, y) <= 0.0) {
            return [0.0; 3];
        }
        let wave = (freq * (x as f64 * c + y as f64 * s)).sin();
        let ramp = y as f64 / h as f64 - 0.5;
        quantize3(std::array::from_fn(|k| base[k] + 0.5 * tint[k] * wave + 0.15 * ramp))
    })
}

fn quality(rng: &mut ChaCha8Rng) -> SynthQuality {
    match rng.random_range(0..10) {
        0..=5 => SynthQuality::Good,
        6..=7 => SynthQuality::Neutral,
        _ => SynthQuality::Poor,
    }
}

/// Visible pixel nearest to the centroid of the visible region.
fn anchor_point(vis: &BinaryMask) -> Option<(usize, usize)> {
    let (h, w) = vis.dims();
    let pts: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| vis.get(x, y))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    pts.into_iter().min_by(|a, b| {
        let d = |p: &(usize, usize)| (p.0 as f64 - mx).powi(2) + (p.1 as f64 - my).powi(2);
        d(a).total_cmp(&d(b))
    })
}

fn foreground_prompts(index: usize, alpha: &AlphaMap, vis: &BinaryMask) -> Vec<Prompt> {
    let name = format!("object {index}");
    let mut prompts = Vec::new();
    if let Ok(b) = alpha.tight_bbox(0.0) {
        prompts.push(Prompt::Box(b));
        prompts.push(Prompt::Combo {
            text: name.clone(),
            spatial: Box::new(Prompt::Box(b)),
        });
    }
    if let Some((x, y)) = anchor_point(vis) {
        prompts.push(Prompt::Point { x, y });
    }
    prompts.push(Prompt::Text(name));
    prompts
}

fn occluded(alpha: &AlphaMap, vis: &BinaryMask) -> bool {
    alpha.support(0.0).count() > vis.count()
}

/// Generates one sample. Foreground visibility is the own support minus
/// every pixel where a layer in front has alpha ≥ 0.5.
pub fn generate_sample(id: &str, height: usize, width: usize, foregrounds: usize, seed: u64) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height, width);
    let background = texture(&mut rng, h, w, None);

    let size = 0.22 * h.min(w) as f64;
    let mut shapes: Vec<Shape> = Vec::with_capacity(foregrounds);
    for i in 0..foregrounds {
        let shape = if i == 0 {
            let cx = w as f64 * rng.random_range(0.35..0.5);
            let cy = h as f64 * rng.random_range(0.35..0.65);
            Shape::random(&mut rng, cx, cy, size)
        } else {
            // overlap the previous layer so it is partly hidden
            let (px, py) = shapes[i - 1].center();
            let dx = size * rng.random_range(0.8..1.2);
            let dy = size * rng.random_range(-0.4..0.4);
            Shape::random(&mut rng, px + dx, py + dy, size * 0.9)
        };
        shapes.push(shape);
    }
    let alphas: Vec<AlphaMap> = shapes.iter().map(|s| shape_alpha(s, h, w)).collect();
    let cover = |from: usize| {
        BinaryMask::from_fn(h, w, |x, y| alphas[from..].iter().any(|a| a.get(x, y) >= 0.5))
    };

    let mut layers = Vec::with_capacity(foregrounds + 1);
    let bg_vis = BinaryMask::filled(h, w, true).and_not(&cover(0)).expect("same dims");
    let bg_layer = RgbaLayer::background(background.clone(), bg_vis.clone()).expect("valid background");
    layers.push(SynthLayer {
        id: "bg".into(),
        occluded: bg_vis.count() < h * w,
        layer: bg_layer,
        prompts: vec![Prompt::Background],
        quality: quality(&mut rng),
        salient: None,
    });

    let mut image = background.clone();
    for (i, alpha) in alphas.iter().enumerate() {
        let rgb = texture(&mut rng, h, w, Some(alpha));
        let support = alpha.support(0.0);
        let vis = support.and_not(&cover(i + 1)).expect("same dims");
        image = alpha_blend(&rgb, alpha, &image).expect("same dims");
        let layer = RgbaLayer::new(rgb, alpha.clone(), vis.clone(), LayerKind::Foreground).expect("valid layer");
        layers.push(SynthLayer {
            id: format!("fg{i}"),
            occluded: occluded(alpha, &vis),
            prompts: foreground_prompts(i, alpha, &vis),
            layer,
            quality: quality(&mut rng),
            salient: Some(rng.random_bool(0.6)),
        });
    }
    let image = Image::from_fn(h, w, |x, y| quantize3(image.pixel(x, y)));
    SynthSample {
        id: id.to_string(),
        image,
        background,
        layers,
    }
}

pub fn generate(config: &SynthConfig) -> Vec<SynthSample> {
    assert!(!config.foreground_pattern.is_empty(), "foreground pattern is empty");
    (0..config.samples)
        .map(|i| {
            let n = config.foreground_pattern[i % config.foreground_pattern.len()];
            let seed = splitmix64(config.seed ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
            generate_sample(&format!("s{i:03}"), config.height, config.width, n, seed)
        })
        .collect()
}

/// A degraded copy of `layer`, as a model of quality `1 − strength` might
/// produce. Visible pixels get noise and a colour cast; occluded pixels are
/// pulled toward the flat mean of the visible region. Alpha is unchanged
/// and the result stays quantised. `strength` 0 returns the layer as-is.
pub fn corrupt_layer(layer: &RgbaLayer, strength: f64, rng: &mut impl Rng) -> RgbaLayer {
    if strength <= 0.0 {
        return layer.clone();
    }
    let s = strength.min(1.0);
    let (h, w) = layer.dims();
    let vis = layer.visibility();
    let alpha = layer.alpha();
    let mut mean = [0.0; 3];
    let n = vis.count().max(1) as f64;
    for y in 0..h {
        for x in 0..w {
            if vis.get(x, y) {
                let p = layer.rgb().pixel(x, y);
                (0..3).for_each(|k| mean[k] += p[k] / n);
            }
        }
    }
    let cast: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0) * 0.25 * s);
    let mut out = Image::filled(h, w, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            if alpha.get(x, y) <= 0.0 {
                continue;
            }
            let p = layer.rgb().pixel(x, y);
            let q: [f64; 3] = if vis.get(x, y) {
                std::array::from_fn(|k| p[k] + cast[k] + 0.3 * s * rng.random_range(-1.0..1.0))
            } else {
                std::array::from_fn(|k| (1.0 - s) * p[k] + s * mean[k] + 0.1 * s * rng.random_range(-1.0..1.0))
            };
            out.set_pixel(x, y, quantize3(q));
        }
    }
    layer.with_rgb(out).expect("same dims")
}

/// Seed for corrupting one layer of one model.
pub fn corruption_seed(seed: u64, model: usize, sample: usize, layer: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed ^ model as u64) ^ sample as u64) ^ layer as u64)
}

/// Nine models spanning corruption strengths 0, 1/8, …, 1.
pub fn graded_models() -> Vec<(String, f64)> {
    (0..9).map(|i| (format!("model-{i}"), i as f64 / 8.0)).collect()
}

#[cfg(feature = "io")]
mod write {
    use std::path::Path;

    use super::*;
    use crate::codec;
    use crate::dataset::{
        AtomicDir, DatasetError, DatasetManifest, LayerEntry, PromptSpec, Quality, SampleEntry,
    };

    fn spec(p: &Prompt) -> PromptSpec {
        match p {
            Prompt::Point { x, y } => PromptSpec::Point { value: [*x, *y] },
            Prompt::Box(b) => PromptSpec::Box {
                value: [b.x0, b.y0, b.x1, b.y1],
            },
            Prompt::Text(t) => PromptSpec::Text { value: t.clone() },
            Prompt::Background => PromptSpec::Background,
            Prompt::Combo { text, spatial } => PromptSpec::Combo {
                text: text.clone(),
                spatial: Box::new(spec(spatial)),
            },
            Prompt::Mask(_) => unreachable!("generated scenes carry no mask prompts"),
        }
    }

    fn quality(q: SynthQuality) -> Quality {
        match q {
            SynthQuality::Good => Quality::Good,
            SynthQuality::Neutral => Quality::Neutral,
            SynthQuality::Poor => Quality::Poor,
        }
    }

    fn codec_err(e: codec::CodecError) -> DatasetError {
        DatasetError::Unreadable(e)
    }

    fn mkdir(p: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(p).map_err(|source| DatasetError::Io {
            path: p.to_path_buf(),
            source,
        })
    }

    /// Writes `samples` as a dataset rooted at `dir` (which must not exist)
    /// and returns the manifest.
    pub fn write_dataset(samples: &[SynthSample], dir: &Path) -> Result<DatasetManifest, DatasetError> {
        let staged = AtomicDir::create(dir)?;
        let root = staged.path();
        let mut entries = Vec::with_capacity(samples.len());
        for s in samples {
            let rel = format!("samples/{}", s.id);
            mkdir(&root.join(&rel))?;
            let image_path = format!("{rel}/image.png");
            let background_path = format!("{rel}/background.png");
            codec::write_rgb(&root.join(&image_path), &s.image).map_err(codec_err)?;
            codec::write_rgb(&root.join(&background_path), &s.background).map_err(codec_err)?;
            let mut layers = Vec::with_capacity(s.layers.len());
            for l in &s.layers {
                let rgba_path = format!("{rel}/{}.png", l.id);
                let visibility_path = format!("{rel}/{}_visibility.png", l.id);
                codec::write_rgba(&root.join(&rgba_path), l.layer.rgb(), l.layer.alpha()).map_err(codec_err)?;
                codec::write_mask(&root.join(&visibility_path), l.layer.visibility()).map_err(codec_err)?;
                layers.push(LayerEntry {
                    id: l.id.clone(),
                    kind: l.layer.kind(),
                    rgba_path,
                    visibility_path,
                    prompts: l.prompts.iter().map(spec).collect(),
                    occluded: Some(l.occluded),
                    quality: Some(quality(l.quality)),
                    salient: l.salient,
                });
            }
            entries.push(SampleEntry {
                id: s.id.clone(),
                image_path,
                background_path: Some(background_path),
                layers,
            });
        }
        let manifest = DatasetManifest::new(entries);
        crate::dataset::save_manifest(&manifest, &root.join("manifest.json"))?;
        staged.commit()?;
        Ok(manifest)
    }

    /// Writes one prediction directory per model under `root`, with `k`
    /// candidates per layer (file suffix `_k` when `k > 1`). Candidate `j`
    /// of a model uses an independent corruption draw.
    pub fn write_predictions(
        samples: &[SynthSample],
        root: &Path,
        models: &[(String, f64)],
        k: usize,
        seed: u64,
    ) -> Result<(), DatasetError> {
        assert!(k >= 1, "need at least one candidate");
        for (m, (model_id, strength)) in models.iter().enumerate() {
            for (si, s) in samples.iter().enumerate() {
                let dir = root.join(model_id).join(&s.id);
                mkdir(&dir)?;
                for (li, l) in s.layers.iter().enumerate() {
                    for j in 0..k {
                        let mut rng = ChaCha8Rng::seed_from_u64(corruption_seed(seed ^ j as u64, m, si, li));
                        let pred = corrupt_layer(&l.layer, *strength, &mut rng);
                        let name = if k == 1 { format!("{}.png", l.id) } else { format!("{}_{j}.png", l.id) };
                        codec::write_rgba(&dir.join(name), pred.rgb(), pred.alpha()).map_err(codec_err)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(feature = "io")]
pub use write::{write_dataset, write_predictions};
