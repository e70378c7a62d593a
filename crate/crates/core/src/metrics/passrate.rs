use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Human verdict on whether any of `k` outputs for a sample is acceptable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassVerdict {
    pub sample_id: String,
    pub k: usize,
    pub satisfied: bool,
}

/// Fraction of samples judged satisfied at the given `k`.
///
/// When several annotators judged the same sample, the sample passes on a
/// strict majority of satisfied verdicts.
pub fn passrate_at_k(verdicts: &[PassVerdict], k: usize) -> Result<f64, MetricError> {
    let mut votes: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for v in verdicts.iter().filter(|v| v.k == k) {
        let e = votes.entry(v.sample_id.as_str()).or_default();
        if v.satisfied {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    if votes.is_empty() {
        return Err(MetricError::NoVerdicts(k));
    }
    let passed = votes.values().filter(|(yes, no)| yes > no).count();
    Ok(passed as f64 / votes.len() as f64)
}
