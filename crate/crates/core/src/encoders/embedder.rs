//! Frozen global embedders. Nothing here is trainable and no gradient flows
//! back into it.

use std::time::Duration;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::prompt::{StubTokenizer, TextPrompt, TokenCounter, MAX_PROMPT_TOKENS};
use super::{EncoderError, FeatureSource, GlobalFeature, RenderedImage, Result, GLOBAL_DIM, IMAGE_CHANNELS, IMAGE_SIZE};
use crate::external::{call_json, ExternalPolicy};
use crate::rng::seeded_rng;

/// A pretrained dual encoder producing 512-dim image and text embeddings.
pub trait EmbedderBackend: TokenCounter + Send + Sync {
    fn name(&self) -> &str;
    fn embed_image(&self, image: &RenderedImage) -> Result<GlobalFeature>;
    fn embed_text(&self, text: &str) -> Result<GlobalFeature>;
}

pub fn embed_image_global(image: &RenderedImage, backend: &dyn EmbedderBackend) -> Result<GlobalFeature> {
    backend.embed_image(image)
}

pub fn embed_text_global(prompt: &TextPrompt, backend: &dyn EmbedderBackend) -> Result<GlobalFeature> {
    if prompt.token_count > MAX_PROMPT_TOKENS {
        return Err(EncoderError::PromptTooLong(prompt.token_count));
    }
    backend.embed_text(&prompt.rendered)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Pooled grid side used by the stub image embedder.
const STUB_GRID: usize = 14;

/// Deterministic stand-in for a pretrained dual encoder.
///
/// Text is embedded as a normalised sum of per-token Gaussian vectors, each
/// seeded by a hash of `(seed, token)`. Images are average-pooled to a
/// 14x14 grid and mapped by a seeded Gaussian projection. Outputs depend
/// only on the seed and the input content.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    seed: u64,
    projection: Array2<f64>,
}

impl StubEmbedder {
    pub fn new(seed: u64) -> Self {
        let inputs = IMAGE_CHANNELS * STUB_GRID * STUB_GRID;
        let mut rng = seeded_rng(seed, "image-projection", &[]);
        let projection = Array2::from_shape_simple_fn((GLOBAL_DIM, inputs), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        Self { seed, projection }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl TokenCounter for StubEmbedder {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        StubTokenizer.count_tokens(text)
    }
}

impl EmbedderBackend for StubEmbedder {
    fn name(&self) -> &str {
        "stub"
    }

    fn embed_image(&self, image: &RenderedImage) -> Result<GlobalFeature> {
        let cell = IMAGE_SIZE / STUB_GRID;
        let mut pooled = vec![0.0f64; IMAGE_CHANNELS * STUB_GRID * STUB_GRID];
        for c in 0..IMAGE_CHANNELS {
            for y in 0..IMAGE_SIZE {
                for x in 0..IMAGE_SIZE {
                    pooled[(c * STUB_GRID + y / cell) * STUB_GRID + x / cell] += image.get(c, y, x) as f64;
                }
            }
        }
        let inv = 1.0 / (cell * cell) as f64;
        // Centre around mid-grey so a blank image is not the zero vector.
        let pooled = ndarray::Array1::from_iter(pooled.into_iter().map(|v| v * inv - 0.5));
        let v = self.projection.dot(&pooled).to_vec();
        GlobalFeature::new(normalize(v), FeatureSource::Vision)
    }

    fn embed_text(&self, text: &str) -> Result<GlobalFeature> {
        let mut acc = vec![0.0f64; GLOBAL_DIM];
        for (a, b) in StubTokenizer::spans(text) {
            let token = text[a..b].to_lowercase();
            let mut rng = seeded_rng(self.seed, "token", token.as_bytes());
            for v in acc.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += z;
            }
        }
        GlobalFeature::new(normalize(acc), FeatureSource::Text)
    }
}

/// Out-of-process dual encoder speaking the JSON protocol of [`crate::external`].
///
/// Requests are `{"op": "embed_text", "text": ..}`,
/// `{"op": "embed_image", "width": 224, "height": 224, "channels": 3, "pixels": [..]}`
/// and `{"op": "count_tokens", "text": ..}`; replies carry `embedding` or `token_count`.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    endpoint: String,
    policy: ExternalPolicy,
}

impl ExternalEmbedder {
    pub fn new(endpoint: impl Into<String>, policy: ExternalPolicy) -> Self {
        Self { endpoint: endpoint.into(), policy }
    }

    fn embedding(&self, request: serde_json::Value, source: FeatureSource) -> Result<GlobalFeature> {
        let reply = call_json(&self.endpoint, &request, &self.policy)?;
        let values: Vec<f64> = reply
            .get("embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EncoderError::InvalidInput("reply lacks an `embedding` array".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| EncoderError::InvalidInput("non-numeric embedding value".into())))
            .collect::<Result<_>>()?;
        GlobalFeature::new(values, source)
    }
}

impl TokenCounter for ExternalEmbedder {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        let reply = call_json(&self.endpoint, &json!({"op": "count_tokens", "text": text}), &self.policy)?;
        reply
            .get("token_count")
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| EncoderError::InvalidInput("reply lacks `token_count`".into()))
    }
}

impl EmbedderBackend for ExternalEmbedder {
    fn name(&self) -> &str {
        "external"
    }

    fn embed_image(&self, image: &RenderedImage) -> Result<GlobalFeature> {
        let request = json!({
            "op": "embed_image",
            "width": IMAGE_SIZE,
            "height": IMAGE_SIZE,
            "channels": IMAGE_CHANNELS,
            "pixels": image.pixels(),
        });
        self.embedding(request, FeatureSource::Vision)
    }

    fn embed_text(&self, text: &str) -> Result<GlobalFeature> {
        self.embedding(json!({"op": "embed_text", "text": text}), FeatureSource::Text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    Stub,
    External,
}

impl std::str::FromStr for EmbedderKind {
    type Err = EncoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stub" => Ok(Self::Stub),
            "external" => Ok(Self::External),
            other => Err(EncoderError::BackendConfig(format!("unknown embedder backend {other:?}"))),
        }
    }
}

impl std::fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Stub => "stub",
            Self::External => "external",
        })
    }
}

/// The `embedder.*` config section.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub backend: EmbedderKind,
    pub endpoint: Option<String>,
    pub seed: u64,
    pub timeout_ms: u64,
    pub max_attempts: u32,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { backend: EmbedderKind::Stub, endpoint: None, seed: 0, timeout_ms: 60_000, max_attempts: 3 }
    }
}

pub fn build_embedder(config: &EmbedderConfig) -> Result<Box<dyn EmbedderBackend>> {
    match config.backend {
        EmbedderKind::Stub => Ok(Box::new(StubEmbedder::new(config.seed))),
        EmbedderKind::External => {
            let endpoint = config
                .endpoint
                .clone()
                .ok_or_else(|| EncoderError::BackendConfig("embedder.endpoint is required for the external backend".into()))?;
            let policy = ExternalPolicy {
                timeout: Duration::from_millis(config.timeout_ms),
                max_attempts: config.max_attempts,
                ..ExternalPolicy::default()
            };
            Ok(Box::new(ExternalEmbedder::new(endpoint, policy)))
        }
    }
}
