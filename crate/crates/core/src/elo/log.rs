//! Newline-delimited JSON ledger: one header line, then one match record
//! per line. Ratings are never stored; they are rebuilt by replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EloError, EloLedger, MatchRecord};

pub const LEDGER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerHeader {
    pub version: u32,
    pub k_factor: f64,
    pub initial_rating: f64,
    pub models: Vec<String>,
}

impl LedgerHeader {
    pub fn of(ledger: &EloLedger) -> Self {
        LedgerHeader {
            version: LEDGER_VERSION,
            k_factor: ledger.k_factor(),
            initial_rating: ledger.initial_rating(),
            models: ledger.models().map(str::to_string).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LedgerFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: empty ledger file (missing header)")]
    MissingHeader { path: String },
    #[error("unsupported ledger version {0}")]
    UnsupportedVersion(u32),
    #[error("{path}:{line}: {source}")]
    Replay {
        path: String,
        line: usize,
        #[source]
        source: EloError,
    },
    #[error(transparent)]
    Elo(#[from] EloError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LedgerFileError + '_ {
    move |source| LedgerFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a ledger file and replays its history.
pub fn read_ledger(path: &Path) -> Result<EloLedger, LedgerFileError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let shown = || path.display().to_string();
    let header: LedgerHeader = loop {
        match lines.next() {
            None => return Err(LedgerFileError::MissingHeader { path: shown() }),
            Some((i, line)) => {
                let line = line.map_err(io_err(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|source| LedgerFileError::Parse {
                    path: shown(),
                    line: i + 1,
                    source,
                })?;
            }
        }
    };
    if header.version != LEDGER_VERSION {
        return Err(LedgerFileError::UnsupportedVersion(header.version));
    }
    let mut ledger = EloLedger::new(header.models, header.k_factor, header.initial_rating)?;
    for (i, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MatchRecord = serde_json::from_str(&line).map_err(|source| LedgerFileError::Parse {
            path: shown(),
            line: i + 1,
            source,
        })?;
        ledger.record_outcome(record).map_err(|source| LedgerFileError::Replay {
            path: shown(),
            line: i + 1,
            source,
        })?;
    }
    Ok(ledger)
}

/// Writes the whole ledger (header plus history) to `path`.
pub fn write_ledger(path: &Path, ledger: &EloLedger) -> Result<(), LedgerFileError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut put = |v: String| writeln!(w, "{v}").map_err(io_err(path));
    put(serde_json::to_string(&LedgerHeader::of(ledger)).expect("header serialises"))?;
    for r in ledger.history() {
        put(serde_json::to_string(r).expect("record serialises"))?;
    }
    w.flush().map_err(io_err(path))
}

/// Append handle that flushes every record to disk before returning.
pub struct LedgerWriter {
    file: File,
    path: std::path::PathBuf,
}

impl LedgerWriter {
    /// Opens `path` for appending, writing a fresh header (and any existing
    /// history) if the file does not exist yet.
    pub fn open(path: &Path, ledger: &EloLedger) -> Result<Self, LedgerFileError> {
        if !path.exists() {
            write_ledger(path, ledger)?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok(LedgerWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &MatchRecord) -> Result<(), LedgerFileError> {
        let mut line = serde_json::to_string(record).expect("record serialises");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}
