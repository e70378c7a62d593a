use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expected_score, EloError, EloLedger, MatchRecord, Outcome, DEFAULT_INITIAL_RATING};

/// Sample id used for every simulated comparison.
pub const SIM_SAMPLE_ID: &str = "simulated";

/// Runs a simulated pairwise study. Each round draws a uniform unordered
/// model pair (random A/B order); the simulated annotator prefers A with
/// the Elo probability implied by the true skills. Deterministic in `seed`.
pub fn simulate_study(
    true_skills: &BTreeMap<String, f64>,
    rounds: usize,
    k_factor: f64,
    seed: u64,
) -> Result<EloLedger, EloError> {
    if true_skills.len() < 2 {
        return Err(EloError::NotEnoughModels(true_skills.len()));
    }
    if rounds == 0 {
        return Err(EloError::NoRounds);
    }
    let mut ledger = EloLedger::new(true_skills.keys().cloned(), k_factor, DEFAULT_INITIAL_RATING)?;
    let models: Vec<&String> = true_skills.keys().collect();
    let n = models.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = DateTime::<Utc>::from_timestamp(0, 0).expect("epoch is representable");
    for round in 0..rounds {
        // uniform over the n(n-1)/2 unordered pairs
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (models[i], models[j]);
        let p_a = expected_score(true_skills[a], true_skills[b]);
        let outcome = if rng.random_bool(p_a) { Outcome::AWins } else { Outcome::BWins };
        ledger.record_outcome(MatchRecord {
            match_id: format!("sim-{round:06}"),
            model_a: a.clone(),
            model_b: b.clone(),
            sample_id: SIM_SAMPLE_ID.to_string(),
            outcome,
            annotator_id: "simulated".to_string(),
            timestamp: start + Duration::seconds(round as i64),
        })?;
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skills(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn argument_errors() {
        assert_eq!(simulate_study(&skills(&[("a", 1.0)]), 10, 32.0, 0).unwrap_err(), EloError::NotEnoughModels(1));
        assert_eq!(
            simulate_study(&skills(&[("a", 1.0), ("b", 1.0)]), 0, 32.0, 0).unwrap_err(),
            EloError::NoRounds
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let s = skills(&[("a", 1700.0), ("b", 1500.0), ("c", 1300.0)]);
        let x = simulate_study(&s, 300, 32.0, 5).unwrap();
        let y = simulate_study(&s, 300, 32.0, 5).unwrap();
        assert_eq!(x.history(), y.history());
        assert_eq!(x.ratings(), y.ratings());
    }

    #[test]
    fn equal_skills_have_no_systematic_gap() {
        let s = skills(&[("a", 1500.0), ("b", 1500.0)]);
        let gaps: Vec<f64> = (0..50)
            .map(|seed| {
                let l = simulate_study(&s, 2000, 32.0, seed).unwrap();
                l.rating("a").unwrap() - l.rating("b").unwrap()
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(mean.abs() < 40.0, "mean gap {mean}");
    }

    #[test]
    fn stronger_model_wins_the_ladder() {
        let s = skills(&[("strong", 1800.0), ("weak", 1200.0)]);
        let wins = (0..100)
            .filter(|&seed| {
                let l = simulate_study(&s, 2000, 32.0, seed).unwrap();
                l.rating("strong").unwrap() > l.rating("weak").unwrap()
            })
            .count();
        assert!(wins >= 99, "{wins}/100");
    }
}
