use super::frechet::{fit_gaussian, frechet_distance};
use super::MetricError;
use crate::embedder::{require_embedding, Embedder};
use crate::layer::{LayerKind, RgbaLayer};
use crate::raster::{same_dims, BBox, Image};

/// Norm below which a feature displacement counts as zero.
pub const DEFAULT_COMPLETION_EPS: f64 = 1e-8;

/// A ground-truth layer with the model's prediction for it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPair {
    pub gt: RgbaLayer,
    pub pred: RgbaLayer,
    /// Clean background plate; required for foreground layers when
    /// computing faithfulness.
    pub background: Option<Image>,
    pub occluded: bool,
}

impl LayerPair {
    pub fn new(gt: RgbaLayer, pred: RgbaLayer, background: Option<Image>, occluded: bool) -> Result<Self, MetricError> {
        same_dims(gt.dims(), pred.dims())?;
        if let Some(bg) = &background {
            same_dims(gt.dims(), bg.dims())?;
        }
        if gt.kind() != pred.kind() {
            return Err(MetricError::KindMismatch);
        }
        Ok(LayerPair {
            gt,
            pred,
            background,
            occluded,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.gt.kind()
    }

    /// Evaluation frame: the tight box around the ground-truth alpha.
    fn frame(&self) -> Result<BBox, MetricError> {
        Ok(self.gt.alpha().tight_bbox(0.0)?)
    }
}

/// Completion score of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Completion {
    Score(f64),
    /// The ground truth has no occluded content to complete.
    Skipped,
}

impl Completion {
    pub fn score(self) -> Option<f64> {
        match self {
            Completion::Score(s) => Some(s),
            Completion::Skipped => None,
        }
    }
}

/// Perceptual distance between ground truth and prediction on the pixels
/// that were visible in the source image, inside the ground-truth frame.
pub fn preservation_distance(pair: &LayerPair, embedder: &dyn Embedder) -> Result<f64, MetricError> {
    let frame = pair.frame()?;
    let vis = pair.gt.visibility().crop(frame)?;
    if vis.is_empty() {
        return Err(MetricError::EmptyVisibility);
    }
    let gt = pair.gt.rgb().crop(frame)?.apply_visibility(&vis)?;
    let pred = pair.pred.rgb().crop(frame)?.apply_visibility(&vis)?;
    Ok(embedder.distance(&gt, &pred)?)
}

/// Cosine between the feature displacement from the visible-only ground
/// truth to the full ground truth, and from the same origin to the
/// prediction.
pub fn completion_similarity(pair: &LayerPair, embedder: &dyn Embedder, eps: f64) -> Result<Completion, MetricError> {
    require_embedding(embedder.spec())?;
    let frame = pair.frame()?;
    let vis = pair.gt.visibility().crop(frame)?;
    let gt = pair.gt.rgb().crop(frame)?;
    let pred = pair.pred.rgb().crop(frame)?;
    let origin = gt.apply_visibility(&vis)?;

    let feats = embedder.embed_many(&[origin, gt, pred])?;
    let u = feats[1].sub(&feats[0]);
    let w = feats[2].sub(&feats[0]);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (nu, nw) = (norm(&u), norm(&w));
    if nu < eps {
        return Ok(Completion::Skipped);
    }
    if nw < eps {
        return Ok(Completion::Score(0.0));
    }
    let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    Ok(Completion::Score((dot / (nu * nw)).clamp(-1.0, 1.0)))
}

fn map_pairs<T: Send>(
    pairs: &[LayerPair],
    f: impl Fn(&LayerPair) -> Result<T, MetricError> + Sync + Send,
) -> Result<Vec<T>, MetricError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pairs.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairs.iter().map(f).collect()
    }
}

/// Per-pair preservation distances and their mean.
pub fn mean_preservation(pairs: &[LayerPair], embedder: &dyn Embedder) -> Result<(f64, Vec<f64>), MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::TooFewSamples { need: 1, got: 0 });
    }
    let per = map_pairs(pairs, |p| preservation_distance(p, embedder))?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((mean, per))
}

/// Per-pair completion scores and the mean over non-skipped samples.
pub fn mean_completion(
    pairs: &[LayerPair],
    embedder: &dyn Embedder,
    eps: f64,
) -> Result<(f64, Vec<Completion>), MetricError> {
    let per = map_pairs(pairs, |p| completion_similarity(p, embedder, eps))?;
    let scores: Vec<f64> = per.iter().filter_map(|c| c.score()).collect();
    if scores.is_empty() {
        return Err(MetricError::AllSkipped);
    }
    Ok((scores.iter().sum::<f64>() / scores.len() as f64, per))
}

/// Composite used for faithfulness: foreground layers are blended over the
/// clean background and cropped by their own alpha; background layers are
/// taken as-is.
fn composite(layer: &RgbaLayer, background: Option<&Image>) -> Result<Image, MetricError> {
    match layer.kind() {
        LayerKind::Background => Ok(layer.rgb().clone()),
        LayerKind::Foreground => {
            let bg = background.ok_or(MetricError::MissingBackground)?;
            let frame = layer.alpha().tight_bbox(0.0)?;
            Ok(layer.blend_over(bg)?.crop(frame)?)
        }
    }
}

/// Fréchet distance between the feature distributions of blended
/// predictions and blended ground truths.
pub fn fidelity_fid(pairs: &[LayerPair], embedder: &dyn Embedder, reg: f64) -> Result<f64, MetricError> {
    if pairs.len() < 2 {
        return Err(MetricError::TooFewSamples {
            need: 2,
            got: pairs.len(),
        });
    }
    require_embedding(embedder.spec())?;
    let blended = map_pairs(pairs, |p| {
        Ok((
            composite(&p.pred, p.background.as_ref())?,
            composite(&p.gt, p.background.as_ref())?,
        ))
    })?;
    let (preds, gts): (Vec<Image>, Vec<Image>) = blended.into_iter().unzip();
    let pred_stats = fit_gaussian(&embedder.embed_many(&preds)?)?;
    let gt_stats = fit_gaussian(&embedder.embed_many(&gts)?)?;
    frechet_distance(&pred_stats, &gt_stats, reg)
}
