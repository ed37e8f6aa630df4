use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fusion::Checkpoint;
use crate::geometry::MetricReport;

use super::{HarnessError, Result};

pub const LEDGER_FILE: &str = "ledger.jsonl";

/// One line of a run ledger. Paths are relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LedgerEvent {
    Start { config_hash: String, seed: u64, parameters: usize, samples: usize, epochs: usize },
    Epoch { epoch: usize, mean_loss: f64, wall_ms: u64 },
    Checkpoint { epoch: usize, path: String, sha256: String },
    Resume { epoch: usize, checkpoint: String },
    Eval { checkpoint: String, split: String, report: MetricReport },
    Abort { epoch: usize, batch: usize, dump: String },
}

impl LedgerEvent {
    /// The event with wall-clock fields cleared.
    fn timeless(&self) -> LedgerEvent {
        match self {
            LedgerEvent::Epoch { epoch, mean_loss, .. } => LedgerEvent::Epoch { epoch: *epoch, mean_loss: *mean_loss, wall_ms: 0 },
            other => other.clone(),
        }
    }
}

/// Append-only record of a run, mirrored to `dir/ledger.jsonl`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    dir: PathBuf,
    pub events: Vec<LedgerEvent>,
}

impl RunLedger {
    /// Opens the ledger in `dir`, reading any events already there.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(LEDGER_FILE);
        let events = if path.is_file() { Self::read(&path)? } else { Vec::new() };
        Ok(Self { dir: dir.to_path_buf(), events })
    }

    pub fn read(path: &Path) -> Result<Vec<LedgerEvent>> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| HarnessError::Ledger(format!("{} line {}: {e}", path.display(), i + 1))))
            .collect()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, event: LedgerEvent) -> Result<()> {
        let path = self.dir.join(LEDGER_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| HarnessError::io(&path, e))?;
        let line = serde_json::to_string(&event).map_err(|e| HarnessError::Ledger(e.to_string()))?;
        writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| HarnessError::io(&path, e))?;
        self.events.push(event);
        Ok(())
    }

    pub fn epoch_losses(&self) -> Vec<(usize, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LedgerEvent::Epoch { epoch, mean_loss, .. } => Some((*epoch, *mean_loss)),
                _ => None,
            })
            .collect()
    }

    pub fn checkpoints(&self) -> Vec<(usize, PathBuf, &str)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LedgerEvent::Checkpoint { epoch, path, sha256 } => Some((*epoch, self.dir.join(path), sha256.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn last_checkpoint(&self) -> Option<PathBuf> {
        self.checkpoints().pop().map(|(_, p, _)| p)
    }

    /// Every referenced checkpoint exists and still carries its recorded hash.
    pub fn verify(&self) -> Result<()> {
        for (_, path, sha) in self.checkpoints() {
            if !path.is_file() {
                return Err(HarnessError::Ledger(format!("checkpoint {} is missing", path.display())));
            }
            let actual = Checkpoint::file_hash(&path)?;
            if actual != sha {
                return Err(HarnessError::Ledger(format!("checkpoint {} has hash {actual}, ledger says {sha}", path.display())));
            }
        }
        Ok(())
    }

    /// Equal up to wall-clock timings.
    pub fn same_run(&self, other: &RunLedger) -> bool {
        self.events.len() == other.events.len() && self.events.iter().zip(&other.events).all(|(a, b)| a.timeless() == b.timeless())
    }
}
