//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Images cross the boundary as row-major RGBA bytes ready for
//! `ImageData`; seeds are `u32` to stay clear of `BigInt` on the JS side.

use std::collections::BTreeMap;

use layerbench::elo::{simulate_study, EloLedger};
use layerbench::hpa::spearman;
use layerbench::prompt::{render_prompt_canvas, Prompt};
use layerbench::render::{make_training_target_with, Checkerboard};
use layerbench::synth::{generate_sample, SynthSample};
use layerbench::{Image, LayerKind, RgbaLayer};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn rgba_bytes(img: &Image) -> Vec<u8> {
    img.data()
        .chunks_exact(3)
        .flat_map(|p| {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [q(p[0]), q(p[1]), q(p[2]), 255]
        })
        .collect()
}

/// A procedural scene: one background plate and `foregrounds` shapes.
#[wasm_bindgen]
pub struct Scene {
    sample: SynthSample,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: usize, foregrounds: usize) -> Result<Scene, String> {
        if !(16..=512).contains(&size) {
            return Err(format!("size must lie in 16..=512, got {size}"));
        }
        Ok(Scene {
            sample: generate_sample("demo", size, size, foregrounds.min(6), u64::from(seed)),
        })
    }

    pub fn size(&self) -> usize {
        self.sample.image.height()
    }

    #[wasm_bindgen(js_name = layerCount)]
    pub fn layer_count(&self) -> usize {
        self.sample.layers.len()
    }

    #[wasm_bindgen(js_name = layerId)]
    pub fn layer_id(&self, index: usize) -> Result<String, String> {
        Ok(self.layer(index)?.id.clone())
    }

    /// Share of the layer's alpha support hidden in the composite.
    #[wasm_bindgen(js_name = hiddenShare)]
    pub fn hidden_share(&self, index: usize) -> Result<f64, String> {
        let l = &self.layer(index)?.layer;
        let total = l.alpha().support(0.0).count();
        Ok(if total == 0 {
            0.0
        } else {
            1.0 - l.visibility().count() as f64 / total as f64
        })
    }

    /// The composited scene.
    pub fn composite(&self) -> Vec<u8> {
        rgba_bytes(&self.sample.image)
    }

    /// Layer `index` blended over a checkerboard.
    pub fn preview(&self, index: usize, cell: usize, jitter: f64, seed: u32) -> Result<Vec<u8>, String> {
        let board = Checkerboard {
            cell,
            jitter,
            seed: u64::from(seed),
        };
        let img = make_training_target_with(&self.layer(index)?.layer, board).map_err(|e| e.to_string())?;
        Ok(rgba_bytes(&img))
    }

    /// Only the pixels of layer `index` that are visible in the composite.
    #[wasm_bindgen(js_name = visiblePart)]
    pub fn visible_part(&self, index: usize) -> Result<Vec<u8>, String> {
        let l = &self.layer(index)?.layer;
        let img = l.rgb().apply_visibility(l.visibility()).map_err(|e| e.to_string())?;
        Ok(rgba_bytes(&img))
    }

    /// Prompt canvas for layer `index`; `kind` is `point`, `box` or `mask`.
    /// Background layers always get the background prompt.
    #[wasm_bindgen(js_name = promptCanvas)]
    pub fn prompt_canvas(&self, index: usize, kind: &str) -> Result<Vec<u8>, String> {
        let layer = &self.layer(index)?.layer;
        let prompt = prompt_for(layer, kind)?;
        let n = self.size();
        let img = render_prompt_canvas(&prompt, n, n).map_err(|e| e.to_string())?;
        Ok(rgba_bytes(&img))
    }
}

impl Scene {
    fn layer(&self, index: usize) -> Result<&layerbench::synth::SynthLayer, String> {
        self.sample
            .layers
            .get(index)
            .ok_or_else(|| format!("layer {index} out of range (scene has {})", self.sample.layers.len()))
    }
}

fn prompt_for(layer: &RgbaLayer, kind: &str) -> Result<Prompt, String> {
    if layer.kind() == LayerKind::Background {
        return Ok(Prompt::Background);
    }
    let support = layer.visibility();
    let bbox = layer.alpha().tight_bbox(0.0).map_err(|e| e.to_string())?;
    match kind {
        "point" => {
            // visible pixel closest to the centre of the box
            let (cx, cy) = ((bbox.x0 + bbox.x1) as f64 / 2.0, (bbox.y0 + bbox.y1) as f64 / 2.0);
            let (h, w) = support.dims();
            let best = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| support.get(x, y))
                .min_by(|a, b| {
                    let d = |p: &(usize, usize)| (p.0 as f64 - cx).powi(2) + (p.1 as f64 - cy).powi(2);
                    d(a).total_cmp(&d(b))
                })
                .ok_or("layer has no visible pixel")?;
            Ok(Prompt::Point { x: best.0, y: best.1 })
        }
        "box" => Ok(Prompt::Box(bbox)),
        "mask" => Ok(Prompt::Mask(support.clone())),
        other => Err(format!("unknown prompt kind `{other}`")),
    }
}

#[derive(Serialize)]
struct Trajectories {
    models: Vec<String>,
    skills: Vec<f64>,
    /// Round index of each snapshot.
    rounds: Vec<usize>,
    /// `ratings[m][s]`: rating of model `m` at snapshot `s`.
    ratings: Vec<Vec<f64>>,
    spearman: f64,
}

/// Simulated pairwise study over `models` models whose true skills are
/// spread evenly from 1200 to 1800, with a rating snapshot every `every`
/// rounds. Returns JSON.
#[wasm_bindgen(js_name = simulateElo)]
pub fn simulate_elo(models: usize, rounds: usize, k_factor: f64, seed: u32, every: usize) -> Result<String, String> {
    if !(2..=16).contains(&models) {
        return Err(format!("models must lie in 2..=16, got {models}"));
    }
    let step = 600.0 / (models - 1) as f64;
    let skills: BTreeMap<String, f64> = (0..models)
        .map(|i| (format!("model-{i:02}"), 1200.0 + step * i as f64))
        .collect();
    let done = simulate_study(&skills, rounds, k_factor, u64::from(seed)).map_err(|e| e.to_string())?;

    let mut replay = EloLedger::new(skills.keys().cloned(), k_factor, done.initial_rating()).map_err(|e| e.to_string())?;
    let every = every.max(1);
    let snapshot = |l: &EloLedger, out: &mut Vec<Vec<f64>>| {
        for (series, r) in out.iter_mut().zip(l.ratings().values()) {
            series.push(*r);
        }
    };
    let mut ratings = vec![Vec::new(); models];
    let mut marks = vec![0];
    snapshot(&replay, &mut ratings);
    for (i, record) in done.history().iter().enumerate() {
        replay.record_outcome(record.clone()).map_err(|e| e.to_string())?;
        if (i + 1) % every == 0 || i + 1 == rounds {
            marks.push(i + 1);
            snapshot(&replay, &mut ratings);
        }
    }
    let truth: Vec<f64> = skills.values().copied().collect();
    let last: Vec<f64> = done.ratings().values().copied().collect();
    let out = Trajectories {
        models: skills.keys().cloned().collect(),
        skills: truth.clone(),
        rounds: marks,
        ratings,
        spearman: spearman(&truth, &last).unwrap_or(f64::NAN),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}
