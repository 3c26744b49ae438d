//! Append-only session event log, one JSON object per line, synced per entry.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use impactlab::market::{Action, Decision, Liquidation, RoundRecord};

use crate::session::SessionPlan;

pub const WAL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum WalEntry {
    Plan { wal_version: u32, plan: SessionPlan, ts_ms: u64 },
    Started { ts_ms: u64 },
    RoundOpen { t: u32, deadline_ms: u64, bots: Vec<(usize, Decision)> },
    Connection { trader_id: usize, connected: bool, ts_ms: u64 },
    Decision { t: u32, trader_id: usize, action: Action, ts_ms: u64 },
    Forecast { t: u32, trader_id: usize, price: f64, ts_ms: u64 },
    Settled { t: u32, ts_ms: u64, decisions: Vec<Decision>, carried_over: Vec<usize>, record: RoundRecord, rewards: Vec<f64> },
    Ended { ts_ms: u64, end_round: u32, bare_prices: Vec<f64>, liquidation: Vec<Liquidation> },
    Aborted { ts_ms: u64, reason: String },
}

#[derive(Debug, Error)]
pub enum WalError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("log does not start with a plan entry")]
    MissingPlan,
    #[error("log version {0} is not supported")]
    Version(u32),
}

#[derive(Debug)]
pub struct Wal {
    path: PathBuf,
    file: File,
}

impl Wal {
    /// Starts a new log; fails if the file exists.
    pub fn create(path: &Path) -> Result<Self, WalError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        Ok(Self { path: path.to_path_buf(), file })
    }

    /// Reopens for appending, dropping a torn final line.
    pub fn reopen(path: &Path) -> Result<Self, WalError> {
        let text = std::fs::read(path)?;
        let good = text.iter().rposition(|&b| b == b'\n').map_or(0, |k| k + 1);
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(good as u64)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { path: path.to_path_buf(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entry: &WalEntry) -> Result<(), WalError> {
        let mut line = serde_json::to_string(entry).map_err(io::Error::from)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads every complete entry. A final line without a newline is a write
/// interrupted by a crash and is skipped.
pub fn read_wal(path: &Path) -> Result<Vec<WalEntry>, WalError> {
    let text = std::fs::read_to_string(path)?;
    let complete = text.rfind('\n').map_or("", |k| &text[..=k]);
    let entries = complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| serde_json::from_str(l).map_err(|e| WalError::Corrupt { line: k + 1, message: e.to_string() }))
        .collect::<Result<Vec<WalEntry>, _>>()?;
    match entries.first() {
        Some(WalEntry::Plan { wal_version, .. }) if *wal_version != WAL_VERSION => Err(WalError::Version(*wal_version)),
        Some(WalEntry::Plan { .. }) => Ok(entries),
        _ => Err(WalError::MissingPlan),
    }
}
