//! Feature extractors and the frozen global embedders.

mod embedder;
mod image;
mod point;
mod prompt;

pub use embedder::{
    build_embedder, embed_image_global, embed_text_global, EmbedderBackend, EmbedderConfig, EmbedderKind,
    ExternalEmbedder, StubEmbedder,
};
pub use image::{token_grid, ImageEncoder, ImageEncoderConfig};
pub use point::{PointEncoder, PointEncoderConfig};
pub use prompt::{build_prompt, build_prompt_with, free_prompt, StubTokenizer, TextPrompt, TokenCounter, MAX_PROMPT_TOKENS};

use ndarray::Array2;
use thiserror::Error;

use crate::external::ExternalError;
use crate::geometry::GeometryError;

/// Dimensionality of the frozen global embeddings.
pub const GLOBAL_DIM: usize = 512;
pub const IMAGE_SIZE: usize = 224;
pub const IMAGE_CHANNELS: usize = 3;
pub const VIEW_COUNT: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("prompt has {0} tokens, limit is {MAX_PROMPT_TOKENS}")]
    PromptTooLong(usize),
    #[error(transparent)]
    Backend(#[from] ExternalError),
    #[error("backend misconfigured: {0}")]
    BackendConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// A `channels x tokens` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    values: Array2<f64>,
}

impl TokenFeatures {
    /// `values` must be `channels x tokens` and finite.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::InvalidInput("non-finite token feature".into()));
        }
        if values.is_empty() {
            return Err(EncoderError::InvalidInput("empty token features".into()));
        }
        Ok(Self { values })
    }

    /// From the internal tokens-as-rows layout.
    pub fn from_token_rows(rows: &Array2<f64>) -> Result<Self> {
        Self::new(rows.t().to_owned())
    }

    pub fn token_rows(&self) -> Array2<f64> {
        self.values.t().to_owned()
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn tokens(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSource {
    Vision,
    Text,
}

/// A frozen 512-dim embedding of an image or a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature {
    values: Vec<f64>,
    source: FeatureSource,
}

impl GlobalFeature {
    pub fn new(values: Vec<f64>, source: FeatureSource) -> Result<Self> {
        if values.len() != GLOBAL_DIM {
            return Err(EncoderError::InvalidInput(format!(
                "global feature must have {GLOBAL_DIM} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::InvalidInput("non-finite global feature".into()));
        }
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn as_row(&self) -> Array2<f64> {
        Array2::from_shape_vec((1, GLOBAL_DIM), self.values.clone()).expect("512 values")
    }
}

/// A `3 x 224 x 224` image, channel-major and row-major within a channel,
/// with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pixels: Vec<f32>,
    view_id: usize,
}

impl RenderedImage {
    pub fn new(pixels: Vec<f32>, view_id: usize) -> Result<Self> {
        let expected = IMAGE_CHANNELS * IMAGE_SIZE * IMAGE_SIZE;
        if pixels.len() != expected {
            return Err(EncoderError::InvalidInput(format!(
                "image must have {expected} values (3x224x224), got {}",
                pixels.len()
            )));
        }
        if view_id >= VIEW_COUNT {
            return Err(EncoderError::InvalidInput(format!("view id {view_id} out of range")));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(EncoderError::InvalidInput("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { pixels, view_id })
    }

    /// Replicates a single-channel `224 x 224` image into three channels.
    pub fn from_gray(gray: &[f32], view_id: usize) -> Result<Self> {
        let mut pixels = Vec::with_capacity(gray.len() * IMAGE_CHANNELS);
        for _ in 0..IMAGE_CHANNELS {
            pixels.extend_from_slice(gray);
        }
        Self::new(pixels, view_id)
    }

    pub fn zeros(view_id: usize) -> Self {
        Self { pixels: vec![0.0; IMAGE_CHANNELS * IMAGE_SIZE * IMAGE_SIZE], view_id: view_id % VIEW_COUNT }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.pixels[(channel * IMAGE_SIZE + y) * IMAGE_SIZE + x]
    }

    /// Pixel-per-row matrix (`224*224 x 3`), rows in row-major pixel order.
    pub fn pixel_rows(&self) -> Array2<f64> {
        let hw = IMAGE_SIZE * IMAGE_SIZE;
        Array2::from_shape_fn((hw, IMAGE_CHANNELS), |(p, c)| self.pixels[c * hw + p] as f64)
    }
}
