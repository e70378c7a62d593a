//! Elo ratings over pairwise human preferences.
//!
//! The [`EloLedger`] is the single owner of ratings, match history and
//! outstanding match leases. Ratings are derived state: replaying the
//! append-only history from the initial rating reproduces them exactly.

mod ledger;
mod log;
mod sim;

pub use self::ledger::{
    expected_score, EloLedger, LeaderboardRow, MatchLease, MatchRecord, Outcome, SamplePool, DEFAULT_INITIAL_RATING,
    DEFAULT_K_FACTOR, DEFAULT_LEASE_TTL_SECS,
};
pub use self::log::{read_ledger, write_ledger, LedgerFileError, LedgerHeader, LedgerWriter, LEDGER_VERSION};
pub use self::sim::{simulate_study, SIM_SAMPLE_ID};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EloError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("a model cannot play itself (`{0}`)")]
    SameModel(String),
    #[error("match `{0}` was already recorded")]
    DuplicateMatchId(String),
    #[error("lease for match `{0}` is expired or held by another annotator")]
    StaleLease(String),
    #[error("no pending match `{0}`")]
    UnknownMatch(String),
    #[error("need at least 2 models, have {0}")]
    NotEnoughModels(usize),
    #[error("no sample has predictions from two different models")]
    NoComparableSamples,
    #[error("a study needs at least one round")]
    NoRounds,
    #[error("duplicate model `{0}`")]
    DuplicateModel(String),
}
