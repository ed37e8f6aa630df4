use crate::config::{ConfigError, KeyValues};
use crate::encoders::{ImageEncoderConfig, PointEncoderConfig};

/// Which global features are injected and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    pub use_visual_global: bool,
    pub use_text_global: bool,
    pub fuse_stage1: bool,
    pub fuse_stage2: bool,
    /// Append the corpus description to the category prompt.
    pub use_rich_text: bool,
    pub channels: usize,
    pub tokens: usize,
    pub attention_heads: usize,
    pub output_points: usize,
}

impl FusionConfig {
    pub fn global_dim(&self) -> usize {
        crate::encoders::GLOBAL_DIM * (self.use_text_global as usize + self.use_visual_global as usize)
    }

    /// Stage 1 is active only when it is switched on and some global feature exists.
    pub fn stage1_active(&self) -> bool {
        self.fuse_stage1 && self.global_dim() > 0
    }

    pub fn stage2_active(&self) -> bool {
        self.fuse_stage2 && self.global_dim() > 0
    }

    pub fn with_globals(mut self, visual: bool, text: bool) -> Self {
        self.use_visual_global = visual;
        self.use_text_global = text;
        self
    }

    pub fn with_stages(mut self, stage1: bool, stage2: bool) -> Self {
        self.fuse_stage1 = stage1;
        self.fuse_stage2 = stage2;
        self
    }
}

/// Full network architecture: fusion switches plus encoder and decoder sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub fusion: FusionConfig,
    /// Partial clouds are resampled to this many points before encoding.
    pub input_points: usize,
    pub neighbors: usize,
    pub edge_hidden: usize,
    pub image_widths: [usize; 4],
    pub fuse_hidden: usize,
    pub ff_hidden: usize,
    /// Seed of the weight initialisation.
    pub init_seed: u64,
}

impl ModelConfig {
    /// Full-size network: 256 channels x 128 tokens, 2048 output points.
    pub fn full() -> Self {
        Self {
            fusion: FusionConfig {
                use_visual_global: true,
                use_text_global: true,
                fuse_stage1: true,
                fuse_stage2: true,
                use_rich_text: true,
                channels: 256,
                tokens: 128,
                attention_heads: 4,
                output_points: 2048,
            },
            input_points: 2048,
            neighbors: 16,
            edge_hidden: 64,
            image_widths: [32, 64, 128, 256],
            fuse_hidden: 512,
            ff_hidden: 512,
            init_seed: 0,
        }
    }

    /// Laptop-scale network used for the synthetic experiments.
    pub fn desk() -> Self {
        Self {
            fusion: FusionConfig { channels: 64, tokens: 32, attention_heads: 4, output_points: 2048, ..Self::full().fusion },
            input_points: 512,
            neighbors: 16,
            edge_hidden: 32,
            image_widths: [8, 16, 16, 32],
            fuse_hidden: 64,
            ff_hidden: 128,
            init_seed: 0,
        }
    }

    /// Tiny network for gradient checks: 8 channels, 4 tokens, 16 output points.
    pub fn toy() -> Self {
        Self {
            fusion: FusionConfig { channels: 8, tokens: 4, attention_heads: 2, output_points: 16, ..Self::full().fusion },
            input_points: 8,
            neighbors: 4,
            edge_hidden: 8,
            image_widths: [4, 4, 8, 8],
            fuse_hidden: 16,
            ff_hidden: 8,
            init_seed: 0,
        }
    }

    pub fn with_fusion(mut self, fusion: FusionConfig) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.fusion;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if f.channels == 0 || f.tokens == 0 || f.attention_heads == 0 {
            return bad("channels, tokens and attention_heads must be positive".into());
        }
        if f.channels % f.attention_heads != 0 {
            return bad(format!("channels {} not divisible by attention_heads {}", f.channels, f.attention_heads));
        }
        if f.output_points == 0 || f.output_points % f.tokens != 0 {
            return bad(format!("output_points {} must be a positive multiple of tokens {}", f.output_points, f.tokens));
        }
        if self.input_points < f.tokens {
            return bad(format!("input_points {} is smaller than tokens {}", self.input_points, f.tokens));
        }
        if self.neighbors == 0 || self.edge_hidden == 0 || self.fuse_hidden == 0 || self.ff_hidden == 0 {
            return bad("hidden widths and neighbors must be positive".into());
        }
        if self.image_widths.contains(&0) {
            return bad("image stage widths must be positive".into());
        }
        Ok(())
    }

    pub fn point_encoder(&self) -> PointEncoderConfig {
        PointEncoderConfig {
            channels: self.fusion.channels,
            tokens: self.fusion.tokens,
            neighbors: self.neighbors,
            edge_hidden: self.edge_hidden,
        }
    }

    pub fn image_encoder(&self) -> ImageEncoderConfig {
        ImageEncoderConfig { channels: self.fusion.channels, tokens: self.fusion.tokens, stage_widths: self.image_widths }
    }

    /// Same architecture; the initialisation seed is ignored.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        ModelConfig { init_seed: 0, ..self.clone() } == ModelConfig { init_seed: 0, ..other.clone() }
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        let f = &self.fusion;
        kv.set("fusion.use_visual_global", f.use_visual_global);
        kv.set("fusion.use_text_global", f.use_text_global);
        kv.set("fusion.fuse_stage1", f.fuse_stage1);
        kv.set("fusion.fuse_stage2", f.fuse_stage2);
        kv.set("fusion.use_rich_text", f.use_rich_text);
        kv.set("fusion.channels", f.channels);
        kv.set("fusion.tokens", f.tokens);
        kv.set("fusion.attention_heads", f.attention_heads);
        kv.set("fusion.output_points", f.output_points);
        kv.set("model.input_points", self.input_points);
        kv.set("model.neighbors", self.neighbors);
        kv.set("model.edge_hidden", self.edge_hidden);
        kv.set(
            "model.image_widths",
            self.image_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("model.fuse_hidden", self.fuse_hidden);
        kv.set("model.ff_hidden", self.ff_hidden);
        kv.set("model.init_seed", self.init_seed);
    }

    /// Reads `fusion.*` and `model.*`; missing keys fall back to `base`.
    pub fn from_kv(kv: &KeyValues, base: &ModelConfig) -> Result<Self, ConfigError> {
        let b = &base.fusion;
        let fusion = FusionConfig {
            use_visual_global: kv.get_or("fusion.use_visual_global", b.use_visual_global)?,
            use_text_global: kv.get_or("fusion.use_text_global", b.use_text_global)?,
            fuse_stage1: kv.get_or("fusion.fuse_stage1", b.fuse_stage1)?,
            fuse_stage2: kv.get_or("fusion.fuse_stage2", b.fuse_stage2)?,
            use_rich_text: kv.get_or("fusion.use_rich_text", b.use_rich_text)?,
            channels: kv.get_or("fusion.channels", b.channels)?,
            tokens: kv.get_or("fusion.tokens", b.tokens)?,
            attention_heads: kv.get_or("fusion.attention_heads", b.attention_heads)?,
            output_points: kv.get_or("fusion.output_points", b.output_points)?,
        };
        let image_widths = if kv.contains("model.image_widths") {
            let v: Vec<usize> = kv.get_list("model.image_widths")?;
            <[usize; 4]>::try_from(v.as_slice())
                .map_err(|_| ConfigError::Invalid("model.image_widths needs exactly 4 values".into()))?
        } else {
            base.image_widths
        };
        let cfg = ModelConfig {
            fusion,
            input_points: kv.get_or("model.input_points", base.input_points)?,
            neighbors: kv.get_or("model.neighbors", base.neighbors)?,
            edge_hidden: kv.get_or("model.edge_hidden", base.edge_hidden)?,
            image_widths,
            fuse_hidden: kv.get_or("model.fuse_hidden", base.fuse_hidden)?,
            ff_hidden: kv.get_or("model.ff_hidden", base.ff_hidden)?,
            init_seed: kv.get_or("model.init_seed", base.init_seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
