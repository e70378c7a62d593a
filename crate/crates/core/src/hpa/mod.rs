//! Min-max normalisation of the three axes and their aggregation into the
//! human-preference-aligned (HPA) score, plus the persisted bounds file and
//! correlation statistics against human ratings.

mod correlation;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correlation::{correlation_report, pearson, ranks, spearman, CorrelationReport, ScatterPoint};

pub const BOUNDS_VERSION: u32 = 1;
const DEGENERATE_WIDEN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HpaError {
    #[error("need at least 2 models to derive bounds, got {0}")]
    TooFewModels(usize),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid bounds for {metric}: {reason}")]
    InvalidBounds { metric: MetricId, reason: String },
    #[error("unsupported bounds file version {0}")]
    UnsupportedVersion(u32),
    #[error("lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("model sets differ: {0}")]
    ModelSetMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    SVis,
    SGen,
    SFid,
}

impl MetricId {
    pub const ALL: [MetricId; 3] = [MetricId::SVis, MetricId::SGen, MetricId::SFid];

    pub fn orientation(self) -> Orientation {
        match self {
            MetricId::SGen => Orientation::HigherBetter,
            MetricId::SVis | MetricId::SFid => Orientation::LowerBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::SVis => "s_vis",
            MetricId::SGen => "s_gen",
            MetricId::SFid => "s_fid",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = HpaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| HpaError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub min: f64,
    pub max: f64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsMetrics {
    pub s_vis: Bound,
    pub s_gen: Bound,
    pub s_fid: Bound,
}

/// Per-metric normalisation bounds, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBounds {
    pub version: u32,
    pub metrics: BoundsMetrics,
    /// Models the bounds were derived from.
    #[serde(default)]
    pub pool: Vec<String>,
}

impl MetricBounds {
    pub fn new(s_vis: (f64, f64), s_gen: (f64, f64), s_fid: (f64, f64), pool: Vec<String>) -> Result<Self, HpaError> {
        let mk = |m: MetricId, (min, max): (f64, f64)| Bound {
            min,
            max,
            orientation: m.orientation(),
        };
        let b = MetricBounds {
            version: BOUNDS_VERSION,
            metrics: BoundsMetrics {
                s_vis: mk(MetricId::SVis, s_vis),
                s_gen: mk(MetricId::SGen, s_gen),
                s_fid: mk(MetricId::SFid, s_fid),
            },
            pool,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn get(&self, metric: MetricId) -> &Bound {
        match metric {
            MetricId::SVis => &self.metrics.s_vis,
            MetricId::SGen => &self.metrics.s_gen,
            MetricId::SFid => &self.metrics.s_fid,
        }
    }

    pub fn validate(&self) -> Result<(), HpaError> {
        if self.version != BOUNDS_VERSION {
            return Err(HpaError::UnsupportedVersion(self.version));
        }
        for m in MetricId::ALL {
            let b = self.get(m);
            let bad = |reason: String| HpaError::InvalidBounds { metric: m, reason };
            if !(b.min.is_finite() && b.max.is_finite()) {
                return Err(bad("non-finite bound".into()));
            }
            if b.min >= b.max {
                return Err(bad(format!("min {} is not below max {}", b.min, b.max)));
            }
            if b.orientation != m.orientation() {
                return Err(bad(format!("orientation must be {:?}", m.orientation())));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, BoundsFileError> {
        let b: MetricBounds = serde_json::from_str(s)?;
        b.validate()?;
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bounds always serialise")
    }
}

#[derive(Debug, Error)]
pub enum BoundsFileError {
    #[error("malformed bounds file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] HpaError),
}

/// Raw axis values of one model on one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub model_id: String,
    pub s_vis: f64,
    pub s_gen: f64,
    pub s_fid: f64,
}

impl RawScores {
    pub fn get(&self, metric: MetricId) -> f64 {
        match metric {
            MetricId::SVis => self.s_vis,
            MetricId::SGen => self.s_gen,
            MetricId::SFid => self.s_fid,
        }
    }
}

/// Derives bounds as the per-metric min/max over a model pool. A metric
/// that is constant across the pool is widened by ±1e-9.
pub fn compute_bounds(reports: &[RawScores]) -> Result<MetricBounds, HpaError> {
    if reports.len() < 2 {
        return Err(HpaError::TooFewModels(reports.len()));
    }
    let range = |m: MetricId| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in reports {
            lo = lo.min(r.get(m));
            hi = hi.max(r.get(m));
        }
        if lo == hi {
            log::warn!("{m} is constant ({lo}) across the pool; widening bounds");
            (lo - DEGENERATE_WIDEN, hi + DEGENERATE_WIDEN)
        } else {
            (lo, hi)
        }
    };
    MetricBounds::new(
        range(MetricId::SVis),
        range(MetricId::SGen),
        range(MetricId::SFid),
        reports.iter().map(|r| r.model_id.clone()).collect(),
    )
}

/// Oriented min-max normalisation to `[0, 1]`, where 1 is best. Values
/// outside the bounds are clamped.
pub fn normalize(value: f64, metric: MetricId, bounds: &MetricBounds) -> f64 {
    let b = bounds.get(metric);
    let span = b.max - b.min;
    let t = match b.orientation {
        Orientation::HigherBetter => (value - b.min) / span,
        Orientation::LowerBetter => (b.max - value) / span,
    };
    t.clamp(0.0, 1.0)
}

/// [`normalize`] addressed by metric name.
pub fn normalize_named(value: f64, metric: &str, bounds: &MetricBounds) -> Result<f64, HpaError> {
    Ok(normalize(value, metric.parse()?, bounds))
}

/// Unweighted mean of the three normalised axes.
pub fn hpa(s_vis: f64, s_gen: f64, s_fid: f64, bounds: &MetricBounds) -> f64 {
    (normalize(s_vis, MetricId::SVis, bounds) + normalize(s_gen, MetricId::SGen, bounds) + normalize(s_fid, MetricId::SFid, bounds))
        / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Subset {
    #[default]
    #[serde(rename = "all")]
    All,
    #[serde(rename = "occ")]
    OccludedOnly,
    #[serde(rename = "fg")]
    ForegroundOnly,
    #[serde(rename = "bg")]
    BackgroundOnly,
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Subset::All),
            "occ" => Ok(Subset::OccludedOnly),
            "fg" => Ok(Subset::ForegroundOnly),
            "bg" => Ok(Subset::BackgroundOnly),
            other => Err(format!("unknown subset `{other}` (expected all|occ|fg|bg)")),
        }
    }
}

/// Scores of one model on one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model_id: String,
    pub s_vis: f64,
    pub s_gen: f64,
    pub s_fid: f64,
    pub hpa: f64,
    pub n_samples: usize,
    pub n_skipped_gen: usize,
    pub subset: Subset,
}

impl ScoreReport {
    pub fn new(raw: &RawScores, n_samples: usize, n_skipped_gen: usize, subset: Subset, bounds: &MetricBounds) -> Self {
        ScoreReport {
            model_id: raw.model_id.clone(),
            s_vis: raw.s_vis,
            s_gen: raw.s_gen,
            s_fid: raw.s_fid,
            hpa: hpa(raw.s_vis, raw.s_gen, raw.s_fid, bounds),
            n_samples,
            n_skipped_gen,
            subset,
        }
    }

    pub fn raw(&self) -> RawScores {
        RawScores {
            model_id: self.model_id.clone(),
            s_vis: self.s_vis,
            s_gen: self.s_gen,
            s_fid: self.s_fid,
        }
    }
}
