//! Convolutional pyramid for rendered views.
//!
//! Four stride-2, kernel-2 convolutions (space-to-depth followed by a shared
//! linear map and GELU) take the 224x224 image to a 14x14 grid, which is
//! average-pooled to a `rows x cols` token grid and projected to `channels`.

use rand::Rng;

use super::{RenderedImage, Result, TokenFeatures, IMAGE_CHANNELS, IMAGE_SIZE};
use crate::nn::{Graph, Linear, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageEncoderConfig {
    pub channels: usize,
    pub tokens: usize,
    pub stage_widths: [usize; 4],
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self { channels: 256, tokens: 128, stage_widths: [32, 64, 128, 256] }
    }
}

/// Most square `rows x cols` factorisation of `tokens` with `rows <= cols`.
pub fn token_grid(tokens: usize) -> (usize, usize) {
    let mut rows = 1;
    for r in 1..=tokens {
        if r * r > tokens {
            break;
        }
        if tokens % r == 0 {
            rows = r;
        }
    }
    (rows, tokens / rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageEncoder {
    pub config: ImageEncoderConfig,
    pub stages: Vec<Linear>,
    pub project: Linear,
}

impl ImageEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: ImageEncoderConfig, rng: &mut impl Rng) -> Self {
        let mut in_c = IMAGE_CHANNELS;
        let mut stages = Vec::with_capacity(4);
        for (i, &w) in config.stage_widths.iter().enumerate() {
            stages.push(Linear::new(store, &format!("{name}.stage{i}"), 4 * in_c, w, rng));
            in_c = w;
        }
        let project = Linear::new(store, &format!("{name}.project"), in_c, config.channels, rng);
        Self { config, stages, project }
    }

    /// Records the encoder on `g`; returns `tokens x channels` features.
    pub fn forward(&self, g: &mut Graph, image: &RenderedImage) -> Var {
        let mut side = IMAGE_SIZE;
        let mut x = g.constant(image.pixel_rows());
        for stage in &self.stages {
            x = g.patchify2(x, side, side);
            side /= 2;
            x = stage.forward(g, x);
            x = g.gelu(x);
        }
        let (rows, cols) = token_grid(self.config.tokens);
        let pooled = g.adaptive_pool(x, side, side, rows, cols);
        self.project.forward(g, pooled)
    }

    pub fn encode(&self, params: &ParamStore, image: &RenderedImage) -> Result<TokenFeatures> {
        let mut g = Graph::new(params);
        let out = self.forward(&mut g, image);
        TokenFeatures::from_token_rows(g.value(out))
    }
}
