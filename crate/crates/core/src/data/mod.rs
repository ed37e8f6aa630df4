//! Triple datasets: partial cloud, complete cloud, 24 rendered views and an
//! optional description per model.

mod layout;
mod loader;
mod split;
mod synth;

pub use layout::{
    load_render, read_split, render_file_name, scan_models, split_path, write_split, DepthImage, ModelEntry, GT_FILE, IMG_HEADER_LEN, IMG_MAGIC,
    PARTIAL_FILE, SPLITS_DIR,
};
pub use loader::{choose_view, load_triples, pick_view, LoaderOptions, LoaderStats, Prefetch, TripleLoader, TripleRecord, ViewMode, GT_POINTS};
pub use split::{SplitSpec, Subset, DEFAULT_HELDOUT, DEFAULT_KNOWN};
pub use synth::{crop_half_space, render_depth, sample_surface, synth_generate, synth_shape, Primitive, SYNTH_CATEGORIES};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("dataset root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("invalid record {model_id}: {reason}")]
    InvalidRecord { model_id: String, reason: String },
    #[error("split: {0}")]
    Split(String),
    #[error("skipped {skipped} of {total} records, more than the {allowed} allowed")]
    TooManySkips { skipped: usize, total: usize, allowed: usize },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        DataError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
