use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetManifest, LayerEntry, LoadedDataset, Quality};
use crate::layer::{LayerKind, RgbaLayer};

pub const DEFAULT_OCCLUSION_THRESHOLD: f64 = 0.01;

fn is_fg(l: &LayerEntry) -> bool {
    l.kind == LayerKind::Foreground
}

/// Number of images per foreground-instance count.
pub fn instance_distribution(manifest: &DatasetManifest) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in &manifest.samples {
        *hist.entry(s.layers.iter().filter(|l| is_fg(l)).count()).or_insert(0) += 1;
    }
    hist
}

/// Uniform histogram over [0, 1]; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn unit(bins: usize) -> Self {
        assert!(bins >= 1, "histogram needs at least one bin");
        Histogram {
            edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let i = ((v.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n - 1);
        self.counts[i] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Area ratio |α > 0| / (H·W) of every foreground layer, binned.
///
/// Panics if `bins` is zero.
pub fn size_ratio_histogram(dataset: &LoadedDataset, bins: usize) -> Histogram {
    let mut hist = Histogram::unit(bins);
    for (s, l) in dataset.layers() {
        if l.layer.kind() == LayerKind::Foreground {
            let area = l.layer.alpha().support(0.0).count();
            hist.add(area as f64 / (s.height * s.width) as f64);
        }
    }
    hist
}

/// Whether more than `threshold` of the layer's alpha support is hidden.
pub fn computed_occlusion(layer: &RgbaLayer, threshold: f64) -> bool {
    let support = layer.alpha().support(0.0);
    let total = support.count();
    if total == 0 {
        return false;
    }
    let shown = support
        .and(layer.visibility())
        .expect("layer masks share dimensions")
        .count();
    // hidden / total > threshold, without the rounding of 1 - shown / total
    (total - shown) as f64 > threshold * total as f64
}

/// Agreement between annotated occlusion flags and the geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagConsistency {
    pub flagged_layers: usize,
    pub agreeing: usize,
    /// `sample/layer` keys whose flag differs from the computed value.
    pub disagreeing: Vec<String>,
    /// Occlusion rate according to the flags alone.
    pub flag_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionReport {
    pub threshold: f64,
    pub foreground_layers: usize,
    pub occluded_layers: usize,
    pub rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<FlagConsistency>,
}

/// Share of foreground layers whose hidden fraction exceeds `threshold`.
///
/// Panics unless `threshold` lies in [0, 1).
pub fn occlusion_rate(dataset: &LoadedDataset, threshold: f64) -> Result<OcclusionReport, DatasetError> {
    assert!((0.0..1.0).contains(&threshold), "occlusion threshold must lie in [0, 1)");
    let mut total = 0;
    let mut occluded = 0;
    let mut flagged = 0;
    let mut flagged_occluded = 0;
    let mut agreeing = 0;
    let mut disagreeing = Vec::new();
    for (s, l) in dataset.layers().filter(|(_, l)| l.layer.kind() == LayerKind::Foreground) {
        total += 1;
        let computed = computed_occlusion(&l.layer, threshold);
        occluded += usize::from(computed);
        if let Some(flag) = l.entry.occluded {
            flagged += 1;
            flagged_occluded += usize::from(flag);
            if flag == computed {
                agreeing += 1;
            } else {
                disagreeing.push(format!("{}/{}", s.id(), l.id()));
            }
        }
    }
    if total == 0 {
        return Err(DatasetError::NoForegroundLayers);
    }
    let consistency = (flagged > 0).then(|| FlagConsistency {
        flagged_layers: flagged,
        agreeing,
        disagreeing,
        flag_rate: flagged_occluded as f64 / flagged as f64,
    });
    Ok(OcclusionReport {
        threshold,
        foreground_layers: total,
        occluded_layers: occluded,
        rate: occluded as f64 / total as f64,
        consistency,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityCounts {
    pub good: usize,
    pub neutral: usize,
    pub poor: usize,
    pub unlabeled: usize,
    /// (good + neutral) / labeled; `None` when nothing is labeled.
    pub pass_share: Option<f64>,
}

impl QualityCounts {
    fn add(&mut self, q: Option<Quality>) {
        match q {
            Some(Quality::Good) => self.good += 1,
            Some(Quality::Neutral) => self.neutral += 1,
            Some(Quality::Poor) => self.poor += 1,
            None => self.unlabeled += 1,
        }
    }

    fn finish(mut self) -> Self {
        let labeled = self.good + self.neutral + self.poor;
        self.pass_share = (labeled > 0).then(|| (self.good + self.neutral) as f64 / labeled as f64);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityAudit {
    pub foreground: QualityCounts,
    pub background: QualityCounts,
}

impl QualityAudit {
    /// `"fg% / bg%"` with one decimal, `-` for unlabeled groups.
    pub fn summary(&self) -> String {
        let pct = |c: &QualityCounts| c.pass_share.map_or("-".to_string(), |s| format!("{:.1}%", 100.0 * s));
        format!("{} / {}", pct(&self.foreground), pct(&self.background))
    }
}

pub fn quality_audit(manifest: &DatasetManifest) -> QualityAudit {
    let mut fg = QualityCounts::default();
    let mut bg = QualityCounts::default();
    for l in manifest.samples.iter().flat_map(|s| &s.layers) {
        if is_fg(l) { &mut fg } else { &mut bg }.add(l.quality);
    }
    QualityAudit {
        foreground: fg.finish(),
        background: bg.finish(),
    }
}

/// Everything `stats` reports about a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub foreground_layers: usize,
    pub background_layers: usize,
    pub mean_instances: f64,
    pub instance_distribution: BTreeMap<usize, usize>,
    pub size_ratio: Histogram,
    pub occlusion: Option<OcclusionReport>,
    pub quality: QualityAudit,
}

impl DatasetStats {
    pub fn compute(dataset: &LoadedDataset, bins: usize, threshold: f64) -> Self {
        let m = &dataset.manifest;
        let fg = m.samples.iter().flat_map(|s| &s.layers).filter(|l| is_fg(l)).count();
        let all: usize = m.samples.iter().map(|s| s.layers.len()).sum();
        DatasetStats {
            samples: m.samples.len(),
            foreground_layers: fg,
            background_layers: all - fg,
            mean_instances: if m.samples.is_empty() { 0.0 } else { fg as f64 / m.samples.len() as f64 },
            instance_distribution: instance_distribution(m),
            size_ratio: size_ratio_histogram(dataset, bins),
            occlusion: occlusion_rate(dataset, threshold).ok(),
            quality: quality_audit(m),
        }
    }
}
