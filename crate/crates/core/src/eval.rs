//! End-to-end scoring of prediction directories against a manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{pair_predictions, Coverage, DatasetError, KeyedPair, LoadedDataset, PredictionSet};
use crate::embedder::Embedder;
use crate::hpa::{compute_bounds, HpaError, MetricBounds, RawScores, ScoreReport, Subset};
use crate::layer::LayerKind;
use crate::metrics::{
    fidelity_fid, mean_completion, mean_preservation, MetricError, DEFAULT_COMPLETION_EPS, DEFAULT_FID_REG,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Hpa(#[from] HpaError),
    #[error("model `{model}`: no layers in subset {subset:?}")]
    EmptySubset { model: String, subset: Subset },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub subset: Subset,
    pub completion_eps: f64,
    pub fid_reg: f64,
    pub allow_missing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            subset: Subset::All,
            completion_eps: DEFAULT_COMPLETION_EPS,
            fid_reg: DEFAULT_FID_REG,
            allow_missing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub layer_id: String,
    pub kind: LayerKind,
    pub occluded: bool,
    pub s_vis: f64,
    /// `None` when the layer has nothing to complete.
    pub s_gen: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub raw: RawScores,
    pub n_samples: usize,
    pub n_skipped_gen: usize,
    pub rows: Vec<SampleRow>,
    pub coverage: Coverage,
}

fn in_subset(p: &KeyedPair, subset: Subset) -> bool {
    match subset {
        Subset::All => true,
        Subset::OccludedOnly => p.pair.occluded,
        Subset::ForegroundOnly => p.pair.kind() == LayerKind::Foreground,
        Subset::BackgroundOnly => p.pair.kind() == LayerKind::Background,
    }
}

/// Scores already-paired layers of one model on the configured subset.
pub fn evaluate_pairs(
    model_id: &str,
    pairs: &[KeyedPair],
    coverage: Coverage,
    embedder: &dyn Embedder,
    config: &EvalConfig,
) -> Result<ModelEvaluation, EvalError> {
    let chosen: Vec<&KeyedPair> = pairs.iter().filter(|p| in_subset(p, config.subset)).collect();
    if chosen.is_empty() {
        return Err(EvalError::EmptySubset {
            model: model_id.to_string(),
            subset: config.subset,
        });
    }
    let layer_pairs: Vec<_> = chosen.iter().map(|p| p.pair.clone()).collect();
    let (s_vis, per_vis) = mean_preservation(&layer_pairs, embedder)?;
    let (s_gen, per_gen) = mean_completion(&layer_pairs, embedder, config.completion_eps)?;
    let s_fid = fidelity_fid(&layer_pairs, embedder, config.fid_reg)?;
    let rows: Vec<SampleRow> = chosen
        .iter()
        .zip(per_vis.iter().zip(&per_gen))
        .map(|(p, (&v, g))| SampleRow {
            sample_id: p.key.sample_id.clone(),
            layer_id: p.key.layer_id.clone(),
            kind: p.pair.kind(),
            occluded: p.pair.occluded,
            s_vis: v,
            s_gen: g.score(),
        })
        .collect();
    Ok(ModelEvaluation {
        raw: RawScores {
            model_id: model_id.to_string(),
            s_vis,
            s_gen,
            s_fid,
        },
        n_samples: rows.len(),
        n_skipped_gen: rows.iter().filter(|r| r.s_gen.is_none()).count(),
        rows,
        coverage,
    })
}

/// Scans `<pred_root>/<model_id>`, pairs it with the dataset and scores it.
pub fn evaluate_model(
    dataset: &LoadedDataset,
    pred_root: &Path,
    model_id: &str,
    embedder: &dyn Embedder,
    config: &EvalConfig,
) -> Result<ModelEvaluation, EvalError> {
    let preds = PredictionSet::scan(pred_root, model_id, dataset)?;
    let paired = pair_predictions(dataset, &preds, config.allow_missing)?;
    evaluate_pairs(model_id, &paired.pairs, paired.coverage, embedder, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    #[serde(flatten)]
    pub score: ScoreReport,
    pub coverage: Coverage,
    pub rows: Vec<SampleRow>,
}

/// Output of an evaluation run over several models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub embedder: String,
    pub subset: Subset,
    pub bounds: MetricBounds,
    pub models: Vec<ModelReport>,
}

impl EvaluationReport {
    /// Attaches HPA scores; `bounds` of `None` derives them from these models.
    pub fn assemble(
        embedder: &str,
        subset: Subset,
        evaluations: Vec<ModelEvaluation>,
        bounds: Option<MetricBounds>,
    ) -> Result<Self, EvalError> {
        let bounds = match bounds {
            Some(b) => b,
            None => {
                let exact = compute_bounds(&evaluations.iter().map(|e| e.raw.clone()).collect::<Vec<_>>())?;
                // Score with the bounds as they will be written, so that
                // re-running against the saved bounds file reproduces the report.
                MetricBounds::from_json(&canonical_json(&exact, false)).unwrap_or(exact)
            }
        };
        let models = evaluations
            .into_iter()
            .map(|e| ModelReport {
                score: ScoreReport::new(&e.raw, e.n_samples, e.n_skipped_gen, subset, &bounds),
                coverage: e.coverage,
                rows: e.rows,
            })
            .collect();
        Ok(EvaluationReport {
            embedder: embedder.to_string(),
            subset,
            bounds,
            models,
        })
    }

    pub fn scores(&self) -> impl Iterator<Item = &ScoreReport> {
        self.models.iter().map(|m| &m.score)
    }
}

/// Rounds a float to 9 significant digits.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Serialises with sorted keys and floats at 9 significant digits, so
/// equal inputs give byte-identical text.
pub fn canonical_json<T: Serialize>(value: &T, pretty: bool) -> String {
    let v = canonicalize(serde_json::to_value(value).expect("value serialises"));
    let mut s = if pretty {
        serde_json::to_string_pretty(&v)
    } else {
        serde_json::to_string(&v)
    }
    .expect("value serialises");
    s.push('\n');
    s
}
