//! HTTP service behind the annotation UI: blind pairwise Elo matches,
//! quality review, Passrate@K verdicts and blended previews.
//!
//! All state changes go through one mutex-guarded [`Inner`]; the ledger
//! file is appended and synced before a result is acknowledged, and the
//! ledger is held under an exclusive file lock while the service runs.

mod api;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::Router;
use chrono::{DateTime, Duration, Utc};
use layerbench::dataset::{load_manifest, LoadedDataset, PredictionSet};
use layerbench::elo::{read_ledger, EloLedger, LedgerWriter, SamplePool};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub use api::router;

/// Source of the current time; swapped out in tests.
pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub manifest: PathBuf,
    pub pred_root: PathBuf,
    pub ledger: PathBuf,
    /// Models to compare; defaults to the ledger's models, or to every
    /// directory under `pred_root` for a new ledger.
    pub models: Vec<String>,
    pub lease_ttl: Duration,
    /// Fixes match scheduling and session tokens; random when `None`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Session {
    pub annotator_id: String,
}

/// A Passrate verdict as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct StoredVerdict {
    pub annotator_id: String,
    pub sample_id: String,
    pub layer_id: String,
    pub model_id: String,
    pub k: usize,
    pub satisfied: bool,
    pub timestamp: DateTime<Utc>,
}

pub(crate) struct Inner {
    pub ledger: EloLedger,
    pub writer: LedgerWriter,
    pub sessions: HashMap<String, Session>,
    pub rng: ChaCha8Rng,
    pub version: u64,
    pub verdicts: Vec<StoredVerdict>,
    pub verdict_log: File,
    pub quality_log: File,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct PreviewKey {
    pub sample: String,
    pub layer: String,
    /// `None` for the ground-truth layer.
    pub model: Option<String>,
    pub k: usize,
}

pub struct AppState {
    pub(crate) dataset: LoadedDataset,
    pub(crate) predictions: BTreeMap<String, PredictionSet>,
    pub(crate) pool: SamplePool,
    pub(crate) ttl: Duration,
    pub(crate) clock: Clock,
    pub(crate) inner: Mutex<Inner>,
    pub(crate) previews: Mutex<HashMap<PreviewKey, Arc<Vec<u8>>>>,
    _lock: File,
}

/// `<sample>/<layer>`: the unit annotators compare, stored as the ledger's
/// sample id.
pub(crate) fn item_id(sample: &str, layer: &str) -> String {
    format!("{sample}/{layer}")
}

fn sidecar(ledger: &Path, suffix: &str) -> PathBuf {
    let stem = ledger.file_stem().unwrap_or_default().to_string_lossy();
    ledger.with_file_name(format!("{stem}.{suffix}.jsonl"))
}

fn open_append(path: &Path) -> Result<File, CliError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(CliError::io(path))
}

fn read_verdicts(path: &Path) -> Result<Vec<StoredVerdict>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?);
    }
    Ok(out)
}

pub(crate) fn append_line<T: Serialize>(file: &mut File, value: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_string(value).expect("record serialises");
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.sync_data()
}

impl AppState {
    /// Loads the dataset and predictions, replays or creates the ledger and
    /// takes an exclusive lock on it.
    pub fn open(config: &ServiceConfig, clock: Clock) -> Result<Arc<Self>, CliError> {
        let dataset = load_manifest(&config.manifest)?;
        let ledger = if config.ledger.exists() {
            let ledger = read_ledger(&config.ledger)?;
            let have: Vec<&str> = ledger.models().collect();
            if !config.models.is_empty() && have != config.models.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(CliError::InvalidArgument(format!(
                    "--models {:?} differ from the ledger's models {have:?}",
                    config.models
                )));
            }
            ledger
        } else {
            let models = if config.models.is_empty() {
                let mut found: Vec<String> = std::fs::read_dir(&config.pred_root)
                    .map_err(CliError::io(&config.pred_root))?
                    .filter_map(|e| e.ok())
                    .filter(|e| e.path().is_dir())
                    .map(|e| e.file_name().to_string_lossy().into_owned())
                    .collect();
                found.sort();
                found
            } else {
                config.models.clone()
            };
            EloLedger::with_defaults(models)?
        };
        let writer = LedgerWriter::open(&config.ledger, &ledger)?;
        let lock = File::open(&config.ledger).map_err(CliError::io(&config.ledger))?;
        if lock.try_lock().is_err() {
            return Err(CliError::LedgerLocked(config.ledger.clone()));
        }

        let mut predictions = BTreeMap::new();
        let mut pool = SamplePool::new();
        for model in ledger.models() {
            let set = PredictionSet::scan(&config.pred_root, model, &dataset)?;
            for key in set.entries.keys() {
                pool.add(item_id(&key.sample_id, &key.layer_id), model);
            }
            predictions.insert(model.to_string(), set);
        }

        let verdict_path = sidecar(&config.ledger, "passrate");
        let verdicts = read_verdicts(&verdict_path)?;
        let rng = match config.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        let inner = Inner {
            version: ledger.history().len() as u64,
            ledger,
            writer,
            sessions: HashMap::new(),
            rng,
            verdicts,
            verdict_log: open_append(&verdict_path)?,
            quality_log: open_append(&sidecar(&config.ledger, "quality"))?,
        };
        Ok(Arc::new(AppState {
            dataset,
            predictions,
            pool,
            ttl: config.lease_ttl,
            clock,
            inner: Mutex::new(inner),
            previews: Mutex::new(HashMap::new()),
            _lock: lock,
        }))
    }

    pub(crate) fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }
}

/// Runs the service on `port` until Ctrl-C.
pub async fn serve(config: ServiceConfig, port: u16) -> Result<(), CliError> {
    let state = AppState::open(&config, system_clock())?;
    let app: Router = router(state);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|e| CliError::Server(format!("cannot bind port {port}: {e}")))?;
    log::info!("listening on {}", listener.local_addr().map_err(|e| CliError::Server(e.to_string()))?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
        .map_err(|e| CliError::Server(e.to_string()))
}
