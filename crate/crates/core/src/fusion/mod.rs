//! The completion network: point and image token encoders, two optional
//! global-fusion stages around a cross-attention block, and a decoder that
//! emits the completed cloud.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{FusionConfig, ModelConfig};
pub use model::{cross_attend, decode, loss, stage_fuse, CompletionModel, Decoder, Globals, SampleInputs};

use thiserror::Error;

use crate::config::ConfigError;
use crate::encoders::EncoderError;
use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("global fusion called without any global feature")]
    FusionDisabled,
    #[error("model expects a {0} global feature")]
    MissingGlobal(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
