use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{computed_occlusion, DEFAULT_OCCLUSION_THRESHOLD};
use super::{DatasetError, LoadedDataset, LoadedSample};
use crate::codec;
use crate::layer::{LayerKind, RgbaLayer};
use crate::metrics::LayerPair;
use crate::raster::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayerKey {
    pub sample_id: String,
    pub layer_id: String,
}

impl LayerKey {
    pub fn new(sample_id: impl Into<String>, layer_id: impl Into<String>) -> Self {
        LayerKey {
            sample_id: sample_id.into(),
            layer_id: layer_id.into(),
        }
    }
}

impl fmt::Display for LayerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.sample_id, self.layer_id)
    }
}

/// One model's outputs: up to K files per layer, ordered by k.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    pub entries: BTreeMap<LayerKey, Vec<PathBuf>>,
}

impl PredictionSet {
    /// Scans `<root>/<model_id>/<sample>/<layer>[_k].png`. A file stem that
    /// equals a layer id is taken as k = 0 before any `_k` suffix is
    /// stripped, so layer ids may themselves contain underscores.
    pub fn scan(root: &Path, model_id: &str, dataset: &LoadedDataset) -> Result<Self, DatasetError> {
        let model_dir = root.join(model_id);
        if !model_dir.is_dir() {
            return Err(DatasetError::MissingFile(model_dir));
        }
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DatasetError::Io { path, source }
        };
        let mut found: BTreeMap<LayerKey, Vec<(usize, PathBuf)>> = BTreeMap::new();
        let mut sample_dirs: Vec<PathBuf> = fs::read_dir(&model_dir)
            .map_err(io(&model_dir))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io(&model_dir))?;
        sample_dirs.sort();
        for dir in sample_dirs.into_iter().filter(|p| p.is_dir()) {
            let sample_id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let sample = dataset
                .sample(&sample_id)
                .ok_or_else(|| DatasetError::UnknownPrediction(format!("{model_id}/{sample_id}")))?;
            for file in fs::read_dir(&dir).map_err(io(&dir))? {
                let path = file.map_err(io(&dir))?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("png") {
                    continue;
                }
                let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let (layer_id, k) = match_layer(sample, &stem)
                    .ok_or_else(|| DatasetError::UnknownPrediction(format!("{model_id}/{sample_id}/{stem}")))?;
                found.entry(LayerKey::new(&sample_id, layer_id)).or_default().push((k, path));
            }
        }
        let entries = found
            .into_iter()
            .map(|(key, mut files)| {
                files.sort();
                (key, files.into_iter().map(|(_, p)| p).collect())
            })
            .collect();
        Ok(PredictionSet {
            model_id: model_id.to_string(),
            entries,
        })
    }
}

fn match_layer(sample: &LoadedSample, stem: &str) -> Option<(String, usize)> {
    if sample.layers.iter().any(|l| l.id() == stem) {
        return Some((stem.to_string(), 0));
    }
    let (base, k) = stem.rsplit_once('_')?;
    if k.is_empty() || !k.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = k.parse().ok()?;
    sample.layers.iter().any(|l| l.id() == base).then(|| (base.to_string(), k))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub expected: usize,
    pub matched: usize,
    pub missing: Vec<String>,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.expected == 0 {
            1.0
        } else {
            self.matched as f64 / self.expected as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct KeyedPair {
    pub key: LayerKey,
    pub pair: LayerPair,
    /// Every candidate for this layer; the first one is `pair.pred`.
    pub candidates: Vec<PathBuf>,
    /// Occlusion computed from the masks, reported next to any explicit flag.
    pub computed_occluded: bool,
}

#[derive(Debug, Clone)]
pub struct PairedSet {
    pub model_id: String,
    pub pairs: Vec<KeyedPair>,
    pub coverage: Coverage,
}

fn load_prediction(path: &Path, kind: LayerKind, key: &LayerKey, dims: (usize, usize)) -> Result<RgbaLayer, DatasetError> {
    let (rgb, alpha) = codec::read_rgba(path)?;
    if rgb.dims() != dims {
        return Err(DatasetError::DimensionMismatch {
            key: key.to_string(),
            got: rgb.dims(),
            want: dims,
        });
    }
    let layer = match kind {
        LayerKind::Background => RgbaLayer::background(rgb, BinaryMask::filled(dims.0, dims.1, true)),
        LayerKind::Foreground => {
            let vis = alpha.support(0.0);
            RgbaLayer::new(rgb, alpha, vis, kind)
        }
    };
    layer.map_err(|e| DatasetError::layer_error(&key.sample_id, &key.layer_id, e))
}

/// Matches a prediction set against the manifest. Missing layers are an
/// error unless `allow_missing`, in which case they are listed in the
/// coverage report.
pub fn pair_predictions(
    dataset: &LoadedDataset,
    preds: &PredictionSet,
    allow_missing: bool,
) -> Result<PairedSet, DatasetError> {
    for key in preds.entries.keys() {
        let known = dataset
            .sample(&key.sample_id)
            .is_some_and(|s| s.layers.iter().any(|l| l.id() == key.layer_id));
        if !known {
            return Err(DatasetError::UnknownPrediction(key.to_string()));
        }
    }
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    let mut expected = 0;
    for (sample, layer) in dataset.layers() {
        expected += 1;
        let key = LayerKey::new(sample.id(), layer.id());
        let Some(files) = preds.entries.get(&key).filter(|f| !f.is_empty()) else {
            missing.push(key.to_string());
            continue;
        };
        let gt = &layer.layer;
        let pred = load_prediction(&files[0], gt.kind(), &key, gt.dims())?;
        let computed = computed_occlusion(gt, DEFAULT_OCCLUSION_THRESHOLD);
        let occluded = layer.entry.occluded.unwrap_or(computed);
        let pair = LayerPair::new(gt.clone(), pred, sample.background.clone(), occluded)
            .map_err(|e| DatasetError::violation(&key.sample_id, Some(&key.layer_id), e.to_string()))?;
        pairs.push(KeyedPair {
            key,
            pair,
            candidates: files.clone(),
            computed_occluded: computed,
        });
    }
    if !missing.is_empty() && !allow_missing {
        return Err(DatasetError::MissingPredictions(missing));
    }
    let coverage = Coverage {
        expected,
        matched: pairs.len(),
        missing,
    };
    Ok(PairedSet {
        model_id: preds.model_id.clone(),
        pairs,
        coverage,
    })
}
