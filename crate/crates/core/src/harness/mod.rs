//! Training, evaluation, ablation and single-shape inference.

mod ablate;
mod complete;
mod config;
mod evaluate;
mod ledger;
mod optim;
mod samples;
mod train;

pub use ablate::{ablate, ablation_grid, cd_improvement, fscore_improvement, AblationRow, AblationTable};
pub use complete::{complete, complete_with_image, image_from_bytes, read_image, resolve_prompt, scatter_plot, CompleteRequest, Plot};
pub use config::{LrSchedule, TrainConfig, SEED_ENV};
pub use evaluate::{evaluate, evaluate_samples, EvalOptions, ModelPredictor, Predictor};
pub use ledger::{LedgerEvent, RunLedger, LEDGER_FILE};
pub use optim::Adam;
pub use samples::{load_records, normalized_pair, prepare_sample, record_prompt, EvalSample};
pub use train::{checkpoint_name, checkpoint_train_config, config_hash, epoch_order, train, TrainOptions, TrainOutcome};

use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::data::DataError;
use crate::encoders::EncoderError;
use crate::fusion::ModelError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}; diagnostics written to {}", dump.display())]
    NonFiniteLoss { epoch: usize, batch: usize, dump: PathBuf },
    #[error("ledger: {0}")]
    Ledger(String),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.into(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Writes `bytes` next to `path` and renames it into place.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Worker count used when the config does not set one.
pub(crate) fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
