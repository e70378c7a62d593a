use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HpaError;

fn check(x: &[f64], y: &[f64]) -> Result<(), HpaError> {
    if x.len() != y.len() {
        return Err(HpaError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(HpaError::TooFewObservations(x.len()));
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, HpaError> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(HpaError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(HpaError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let mean = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = mean;
        }
        i = j;
    }
    out
}

/// Spearman rank correlation: Pearson over fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, HpaError> {
    check(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model_id: String,
    pub hpa: f64,
    pub elo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub spearman: f64,
    pub scatter: Vec<ScatterPoint>,
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_id,hpa,elo\n");
        for p in &self.scatter {
            out.push_str(&format!("{},{},{}\n", p.model_id, p.hpa, p.elo));
        }
        out
    }
}

/// Correlates per-model HPA scores with per-model human ratings.
pub fn correlation_report(hpa: &BTreeMap<String, f64>, elo: &BTreeMap<String, f64>) -> Result<CorrelationReport, HpaError> {
    if hpa.keys().ne(elo.keys()) {
        let only_hpa: Vec<_> = hpa.keys().filter(|k| !elo.contains_key(*k)).cloned().collect();
        let only_elo: Vec<_> = elo.keys().filter(|k| !hpa.contains_key(*k)).cloned().collect();
        return Err(HpaError::ModelSetMismatch(format!(
            "only scored: {only_hpa:?}; only rated: {only_elo:?}"
        )));
    }
    let scatter: Vec<ScatterPoint> = hpa
        .iter()
        .map(|(id, &h)| ScatterPoint {
            model_id: id.clone(),
            hpa: h,
            elo: elo[id],
        })
        .collect();
    let xs: Vec<f64> = scatter.iter().map(|p| p.hpa).collect();
    let ys: Vec<f64> = scatter.iter().map(|p| p.elo).collect();
    Ok(CorrelationReport {
        pearson: pearson(&xs, &ys)?,
        spearman: spearman(&xs, &ys)?,
        scatter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &lin).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(HpaError::ZeroVariance("x")));
        assert_eq!(pearson(&[1.0], &[1.0, 2.0]), Err(HpaError::LengthMismatch(1, 2)));
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let cubed: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman(&x, &cubed).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tied_ranks() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn report_requires_matching_models() {
        let hpa: BTreeMap<String, f64> = [("a", 0.1), ("b", 0.5), ("c", 0.9)].map(|(k, v)| (k.to_string(), v)).into();
        let elo: BTreeMap<String, f64> = [("a", 1400.0), ("b", 1500.0), ("c", 1600.0)].map(|(k, v)| (k.to_string(), v)).into();
        let r = correlation_report(&hpa, &elo).unwrap();
        assert!((r.spearman - 1.0).abs() < 1e-12);
        assert_eq!(r.scatter.len(), 3);
        assert!(r.to_csv().starts_with("model_id,hpa,elo\na,0.1,1400\n"));

        let mut short = elo.clone();
        short.remove("c");
        assert!(matches!(correlation_report(&hpa, &short), Err(HpaError::ModelSetMismatch(_))));
    }
}
