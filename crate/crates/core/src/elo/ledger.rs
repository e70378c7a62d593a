use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EloError;

pub const DEFAULT_INITIAL_RATING: f64 = 1500.0;
pub const DEFAULT_K_FACTOR: f64 = 32.0;
pub const DEFAULT_LEASE_TTL_SECS: i64 = 300;

/// Probability that a player rated `ra` beats one rated `rb`.
pub fn expected_score(ra: f64, rb: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((rb - ra) / 400.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "a")]
    AWins,
    #[serde(rename = "b")]
    BWins,
    #[serde(rename = "tie")]
    Tie,
}

impl Outcome {
    /// Score credited to model A.
    pub fn score_a(self) -> f64 {
        match self {
            Outcome::AWins => 1.0,
            Outcome::BWins => 0.0,
            Outcome::Tie => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: String,
    pub model_a: String,
    pub model_b: String,
    pub sample_id: String,
    pub outcome: Outcome,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLease {
    pub match_id: String,
    pub model_a: String,
    pub model_b: String,
    pub sample_id: String,
    pub annotator_id: String,
    pub expires_at: DateTime<Utc>,
}

impl MatchLease {
    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        now >= self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model_id: String,
    pub rating: f64,
    pub matches: usize,
}

/// Which models have outputs for which evaluation samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePool {
    samples: BTreeMap<String, BTreeSet<String>>,
}

impl SamplePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, sample_id: impl Into<String>, model_id: impl Into<String>) {
        self.samples.entry(sample_id.into()).or_default().insert(model_id.into());
    }

    /// Pool where every listed model has an output for `sample_id`.
    pub fn shared(sample_id: &str, models: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut pool = Self::new();
        for m in models {
            pool.add(sample_id, m);
        }
        pool
    }

    /// Samples with outputs from both models, in id order.
    pub fn comparable(&self, a: &str, b: &str) -> Vec<&str> {
        self.samples
            .iter()
            .filter(|(_, ms)| ms.contains(a) && ms.contains(b))
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Ratings, append-only match history and pending leases.
#[derive(Debug, Clone)]
pub struct EloLedger {
    k_factor: f64,
    initial_rating: f64,
    ratings: BTreeMap<String, f64>,
    played: BTreeMap<String, usize>,
    history: Vec<MatchRecord>,
    recorded: HashSet<String>,
    pending: BTreeMap<String, MatchLease>,
    next_match: u64,
}

impl EloLedger {
    pub fn new(models: impl IntoIterator<Item = impl Into<String>>, k_factor: f64, initial_rating: f64) -> Result<Self, EloError> {
        let mut ratings = BTreeMap::new();
        for m in models {
            let m = m.into();
            if ratings.insert(m.clone(), initial_rating).is_some() {
                return Err(EloError::DuplicateModel(m));
            }
        }
        let played = ratings.keys().map(|m| (m.clone(), 0)).collect();
        Ok(EloLedger {
            k_factor,
            initial_rating,
            ratings,
            played,
            history: Vec::new(),
            recorded: HashSet::new(),
            pending: BTreeMap::new(),
            next_match: 0,
        })
    }

    pub fn with_defaults(models: impl IntoIterator<Item = impl Into<String>>) -> Result<Self, EloError> {
        Self::new(models, DEFAULT_K_FACTOR, DEFAULT_INITIAL_RATING)
    }

    pub fn k_factor(&self) -> f64 {
        self.k_factor
    }

    pub fn initial_rating(&self) -> f64 {
        self.initial_rating
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.ratings.keys().map(String::as_str)
    }

    pub fn ratings(&self) -> &BTreeMap<String, f64> {
        &self.ratings
    }

    pub fn rating(&self, model: &str) -> Option<f64> {
        self.ratings.get(model).copied()
    }

    pub fn history(&self) -> &[MatchRecord] {
        &self.history
    }

    pub fn pending(&self) -> impl Iterator<Item = &MatchLease> {
        self.pending.values()
    }

    pub fn lease(&self, match_id: &str) -> Option<&MatchLease> {
        self.pending.get(match_id)
    }

    fn known(&self, model: &str) -> Result<f64, EloError> {
        self.rating(model).ok_or_else(|| EloError::UnknownModel(model.to_string()))
    }

    /// Applies one outcome and appends it to the history. Any lease on the
    /// same match id is cleared. Returns the updated `(rating_a, rating_b)`.
    pub fn record_outcome(&mut self, record: MatchRecord) -> Result<(f64, f64), EloError> {
        let ra = self.known(&record.model_a)?;
        let rb = self.known(&record.model_b)?;
        if record.model_a == record.model_b {
            return Err(EloError::SameModel(record.model_a));
        }
        if self.recorded.contains(&record.match_id) {
            return Err(EloError::DuplicateMatchId(record.match_id));
        }
        let delta = self.k_factor * (record.outcome.score_a() - expected_score(ra, rb));
        let (na, nb) = (ra + delta, rb - delta);
        self.ratings.insert(record.model_a.clone(), na);
        self.ratings.insert(record.model_b.clone(), nb);
        *self.played.entry(record.model_a.clone()).or_default() += 1;
        *self.played.entry(record.model_b.clone()).or_default() += 1;
        self.pending.remove(&record.match_id);
        self.recorded.insert(record.match_id.clone());
        self.history.push(record);
        Ok((na, nb))
    }

    /// Resolves a leased match. The lease must exist, belong to
    /// `annotator_id`, and not have expired at `now`.
    pub fn submit(
        &mut self,
        match_id: &str,
        annotator_id: &str,
        outcome: Outcome,
        now: DateTime<Utc>,
    ) -> Result<MatchRecord, EloError> {
        if self.recorded.contains(match_id) {
            return Err(EloError::DuplicateMatchId(match_id.to_string()));
        }
        let lease = self
            .pending
            .get(match_id)
            .ok_or_else(|| EloError::UnknownMatch(match_id.to_string()))?;
        if lease.annotator_id != annotator_id || lease.is_expired(now) {
            return Err(EloError::StaleLease(match_id.to_string()));
        }
        let record = MatchRecord {
            match_id: lease.match_id.clone(),
            model_a: lease.model_a.clone(),
            model_b: lease.model_b.clone(),
            sample_id: lease.sample_id.clone(),
            outcome,
            annotator_id: annotator_id.to_string(),
            timestamp: now,
        };
        self.record_outcome(record.clone())?;
        Ok(record)
    }

    /// Leases a match to `annotator_id`. An expired lease, if any, is handed
    /// out again first; otherwise a uniformly random unordered model pair
    /// with at least one comparable sample is drawn, its A/B order is
    /// randomised, and a comparable sample is drawn uniformly.
    pub fn schedule_match<R: Rng + ?Sized>(
        &mut self,
        annotator_id: &str,
        ttl: Duration,
        pool: &SamplePool,
        rng: &mut R,
        now: DateTime<Utc>,
    ) -> Result<MatchLease, EloError> {
        if self.ratings.len() < 2 {
            return Err(EloError::NotEnoughModels(self.ratings.len()));
        }
        if let Some(lease) = self.pending.values_mut().find(|l| l.is_expired(now)) {
            lease.annotator_id = annotator_id.to_string();
            lease.expires_at = now + ttl;
            return Ok(lease.clone());
        }
        let models: Vec<&str> = self.models().collect();
        let mut candidates = Vec::new();
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                let samples = pool.comparable(models[i], models[j]);
                if !samples.is_empty() {
                    candidates.push((models[i], models[j], samples));
                }
            }
        }
        if candidates.is_empty() {
            return Err(EloError::NoComparableSamples);
        }
        let (a, b, samples) = &candidates[rng.random_range(0..candidates.len())];
        let (a, b) = if rng.random_bool(0.5) { (*a, *b) } else { (*b, *a) };
        let (a, b, sample) = (a.to_string(), b.to_string(), samples[rng.random_range(0..samples.len())].to_string());
        let match_id = loop {
            let id = format!("m{:06}", self.next_match);
            self.next_match += 1;
            if !self.recorded.contains(&id) && !self.pending.contains_key(&id) {
                break id;
            }
        };
        let lease = MatchLease {
            match_id: match_id.clone(),
            model_a: a,
            model_b: b,
            sample_id: sample,
            annotator_id: annotator_id.to_string(),
            expires_at: now + ttl,
        };
        self.pending.insert(match_id, lease.clone());
        Ok(lease)
    }

    /// Models by descending rating, ties broken by id.
    pub fn leaderboard(&self) -> Vec<LeaderboardRow> {
        let mut rows: Vec<LeaderboardRow> = self
            .ratings
            .iter()
            .map(|(m, &r)| LeaderboardRow {
                model_id: m.clone(),
                rating: r,
                matches: self.played.get(m).copied().unwrap_or(0),
            })
            .collect();
        rows.sort_by(|a, b| b.rating.total_cmp(&a.rating).then_with(|| a.model_id.cmp(&b.model_id)));
        rows
    }

    /// Recomputes ratings from the initial rating by replaying history.
    pub fn replay(&self) -> Result<BTreeMap<String, f64>, EloError> {
        let mut fresh = EloLedger::new(self.ratings.keys().cloned(), self.k_factor, self.initial_rating)?;
        for r in &self.history {
            fresh.record_outcome(r.clone())?;
        }
        Ok(fresh.ratings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000, 0).unwrap()
    }

    fn rec(id: &str, a: &str, b: &str, outcome: Outcome) -> MatchRecord {
        MatchRecord {
            match_id: id.into(),
            model_a: a.into(),
            model_b: b.into(),
            sample_id: "s0".into(),
            outcome,
            annotator_id: "ann".into(),
            timestamp: t0(),
        }
    }

    #[test]
    fn expected_score_values() {
        assert_eq!(expected_score(1500.0, 1500.0), 0.5);
        assert!((expected_score(1500.0, 1100.0) - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn decisive_and_tied_updates() {
        let mut l = EloLedger::with_defaults(["a", "b"]).unwrap();
        assert_eq!(l.record_outcome(rec("1", "a", "b", Outcome::AWins)).unwrap(), (1516.0, 1484.0));
        let mut l = EloLedger::with_defaults(["a", "b"]).unwrap();
        assert_eq!(l.record_outcome(rec("1", "a", "b", Outcome::Tie)).unwrap(), (1500.0, 1500.0));
    }

    #[test]
    fn record_errors() {
        let mut l = EloLedger::with_defaults(["a", "b"]).unwrap();
        l.record_outcome(rec("1", "a", "b", Outcome::BWins)).unwrap();
        assert_eq!(
            l.record_outcome(rec("1", "a", "b", Outcome::AWins)),
            Err(EloError::DuplicateMatchId("1".into()))
        );
        assert_eq!(
            l.record_outcome(rec("2", "a", "zz", Outcome::AWins)),
            Err(EloError::UnknownModel("zz".into()))
        );
        assert_eq!(l.record_outcome(rec("3", "a", "a", Outcome::AWins)), Err(EloError::SameModel("a".into())));
        assert_eq!(l.history().len(), 1);
    }

    #[test]
    fn leaderboard_order() {
        let l = EloLedger::with_defaults(["c", "a", "b"]).unwrap();
        let ids: Vec<_> = l.leaderboard().into_iter().map(|r| r.model_id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let mut l = l;
        l.record_outcome(rec("1", "b", "c", Outcome::BWins)).unwrap();
        let board = l.leaderboard();
        assert_eq!(board[0].model_id, "c");
        assert_eq!(board[0].matches, 1);
        assert_eq!(board[1].model_id, "a");
    }

    #[test]
    fn lease_lifecycle() {
        let mut l = EloLedger::with_defaults(["a", "b"]).unwrap();
        let pool = SamplePool::shared("s0", ["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ttl = Duration::seconds(DEFAULT_LEASE_TTL_SECS);
        let lease = l.schedule_match("alice", ttl, &pool, &mut rng, t0()).unwrap();
        let pair: BTreeSet<_> = [lease.model_a.as_str(), lease.model_b.as_str()].into();
        assert_eq!(pair, BTreeSet::from(["a", "b"]));

        // another annotator gets a different match while the lease is live
        let other = l.schedule_match("bob", ttl, &pool, &mut rng, t0()).unwrap();
        assert_ne!(other.match_id, lease.match_id);

        assert_eq!(
            l.submit(&lease.match_id, "bob", Outcome::AWins, t0()),
            Err(EloError::StaleLease(lease.match_id.clone()))
        );
        let late = t0() + ttl;
        assert_eq!(
            l.submit(&lease.match_id, "alice", Outcome::AWins, late),
            Err(EloError::StaleLease(lease.match_id.clone()))
        );

        // expired leases are reissued before new ones are drawn
        let reissued = l.schedule_match("carol", ttl, &pool, &mut rng, late).unwrap();
        assert_eq!(reissued.match_id, lease.match_id);
        assert_eq!(reissued.annotator_id, "carol");
        l.submit(&lease.match_id, "carol", Outcome::AWins, late).unwrap();
        assert!(l.lease(&lease.match_id).is_none());
        assert_eq!(
            l.submit(&lease.match_id, "carol", Outcome::AWins, late),
            Err(EloError::DuplicateMatchId(lease.match_id.clone()))
        );
        assert_eq!(l.history().len(), 1);
    }

    #[test]
    fn scheduling_errors_and_determinism() {
        let ttl = Duration::seconds(60);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut solo = EloLedger::with_defaults(["a"]).unwrap();
        assert_eq!(
            solo.schedule_match("x", ttl, &SamplePool::new(), &mut rng, t0()),
            Err(EloError::NotEnoughModels(1))
        );
        let mut l = EloLedger::with_defaults(["a", "b", "c"]).unwrap();
        let mut pool = SamplePool::new();
        pool.add("s0", "a");
        pool.add("s1", "b");
        assert_eq!(l.schedule_match("x", ttl, &pool, &mut rng, t0()), Err(EloError::NoComparableSamples));

        let pool = SamplePool::shared("s0", ["a", "b", "c"]);
        let run = || {
            let mut l = EloLedger::with_defaults(["a", "b", "c"]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..20)
                .map(|_| l.schedule_match("x", ttl, &pool, &mut rng, t0()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn only_comparable_samples_are_used() {
        let mut pool = SamplePool::new();
        for m in ["a", "b"] {
            pool.add("both", m);
        }
        pool.add("only-a", "a");
        let mut l = EloLedger::with_defaults(["a", "b"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let lease = l.schedule_match("x", Duration::seconds(5), &pool, &mut rng, t0()).unwrap();
            assert_eq!(lease.sample_id, "both");
        }
    }

    proptest! {
        #[test]
        fn expected_score_complements(ra in 0.0f64..3000.0, rb in 0.0f64..3000.0) {
            prop_assert!((expected_score(ra, rb) + expected_score(rb, ra) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn expected_score_monotone(ra in 0.0f64..3000.0, rb in 0.0f64..3000.0, d in 1.0f64..200.0) {
            prop_assert!(expected_score(ra + d, rb) > expected_score(ra, rb));
            prop_assert!(expected_score(ra, rb + d) < expected_score(ra, rb));
        }

        #[test]
        fn conservation_and_replay(outcomes in prop::collection::vec((0usize..4, 0usize..4, 0u8..3), 1..60)) {
            let models = ["m0", "m1", "m2", "m3"];
            let mut l = EloLedger::with_defaults(models).unwrap();
            for (i, (a, b, o)) in outcomes.into_iter().enumerate() {
                if a == b { continue; }
                let outcome = [Outcome::AWins, Outcome::BWins, Outcome::Tie][o as usize];
                l.record_outcome(rec(&i.to_string(), models[a], models[b], outcome)).unwrap();
            }
            let total: f64 = l.ratings().values().sum();
            prop_assert!((total - 4.0 * DEFAULT_INITIAL_RATING).abs() < 1e-9);
            prop_assert_eq!(&l.replay().unwrap(), l.ratings());
        }
    }
}
