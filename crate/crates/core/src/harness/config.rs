use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{ConfigError, KeyValues};
use crate::encoders::{EmbedderConfig, EmbedderKind};
use crate::fusion::ModelConfig;
use crate::geometry::DEFAULT_FSCORE_TAU;

use super::{HarnessError, Result};

/// Environment variable that replaces `train.seed`.
pub const SEED_ENV: &str = "MMC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
}

impl FromStr for LrSchedule {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, ConfigError> {
        match s {
            "constant" => Ok(Self::Constant),
            other => Err(ConfigError::Invalid(format!("unknown lr schedule {other:?}"))),
        }
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("constant")
    }
}

/// Everything a training run depends on.
///
/// Stored as flat `key = value` text:
///
/// ```text
/// optim.name = adam         optim.lr, optim.beta1, optim.beta2, optim.eps, optim.lr_schedule
/// train.seed = 0            train.epochs, train.batch_size, train.checkpoint_every, train.workers
/// data.root = data          data.split, data.corpus
/// eval.split = eval         eval.tau
/// embedder.backend = stub   embedder.endpoint, embedder.seed, embedder.timeout_ms, embedder.max_attempts
/// fusion.* / model.*        network architecture
/// ```
///
/// `model.init_seed` always follows `train.seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Threads for per-sample gradients and evaluation; 0 means one per core.
    pub workers: usize,
    pub data_root: PathBuf,
    pub split: String,
    pub corpus: Option<PathBuf>,
    pub eval_split: String,
    pub eval_tau: f64,
    pub embedder: EmbedderConfig,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Full-size schedule: Adam(0.9, 0.999), lr 0.00209, 400 epochs, batch 560.
    pub fn full() -> Self {
        Self {
            lr: 0.00209,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_schedule: LrSchedule::Constant,
            epochs: 400,
            batch_size: 560,
            checkpoint_every: 10,
            seed: 0,
            workers: 0,
            data_root: PathBuf::from("data"),
            split: "train".into(),
            corpus: None,
            eval_split: "eval".into(),
            eval_tau: DEFAULT_FSCORE_TAU,
            embedder: EmbedderConfig::default(),
            model: ModelConfig::full(),
        }
    }

    /// Laptop defaults: 200 epochs, batch 8, lr 1e-3 and the desk network.
    pub fn desk() -> Self {
        Self { lr: 1e-3, epochs: 200, batch_size: 8, model: ModelConfig::desk(), ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(ConfigError::Invalid(m.into())));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("optim.lr must be a positive number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("optim.beta1 and optim.beta2 must lie in [0, 1)");
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("optim.eps must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("train.epochs, train.batch_size and train.checkpoint_every must be at least 1");
        }
        if !(self.eval_tau.is_finite() && self.eval_tau > 0.0) {
            return bad("eval.tau must be positive");
        }
        if self.model.init_seed != self.seed {
            return bad("model.init_seed must equal train.seed");
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 { super::default_workers() } else { self.workers }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("optim.name", "adam");
        kv.set("optim.lr", self.lr);
        kv.set("optim.beta1", self.beta1);
        kv.set("optim.beta2", self.beta2);
        kv.set("optim.eps", self.eps);
        kv.set("optim.lr_schedule", self.lr_schedule);
        kv.set("train.epochs", self.epochs);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.checkpoint_every", self.checkpoint_every);
        kv.set("train.seed", self.seed);
        kv.set("train.workers", self.workers);
        kv.set("data.root", self.data_root.display());
        kv.set("data.split", &self.split);
        if let Some(c) = &self.corpus {
            kv.set("data.corpus", c.display());
        }
        kv.set("eval.split", &self.eval_split);
        kv.set("eval.tau", self.eval_tau);
        kv.set("embedder.backend", self.embedder.backend);
        if let Some(e) = &self.embedder.endpoint {
            kv.set("embedder.endpoint", e);
        }
        kv.set("embedder.seed", self.embedder.seed);
        kv.set("embedder.timeout_ms", self.embedder.timeout_ms);
        kv.set("embedder.max_attempts", self.embedder.max_attempts);
        self.model.write_kv(&mut kv);
        kv
    }

    /// Reads a config; keys that are absent keep their desk default.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let base = Self::desk();
        let optimizer: String = kv.get_or("optim.name", "adam".to_string())?;
        if optimizer != "adam" {
            return Err(ConfigError::Invalid(format!("unsupported optimizer {optimizer:?}")).into());
        }
        let backend = match kv.raw("embedder.backend") {
            Some(b) => b.parse::<EmbedderKind>()?,
            None => base.embedder.backend,
        };
        let seed = kv.get_or("train.seed", base.seed)?;
        let mut model = ModelConfig::from_kv(kv, &base.model)?;
        model.init_seed = seed;
        let config = Self {
            lr: kv.get_or("optim.lr", base.lr)?,
            beta1: kv.get_or("optim.beta1", base.beta1)?,
            beta2: kv.get_or("optim.beta2", base.beta2)?,
            eps: kv.get_or("optim.eps", base.eps)?,
            lr_schedule: kv.get_or("optim.lr_schedule", base.lr_schedule)?,
            epochs: kv.get_or("train.epochs", base.epochs)?,
            batch_size: kv.get_or("train.batch_size", base.batch_size)?,
            checkpoint_every: kv.get_or("train.checkpoint_every", base.checkpoint_every)?,
            seed,
            workers: kv.get_or("train.workers", base.workers)?,
            data_root: kv.get_or("data.root", base.data_root)?,
            split: kv.get_or("data.split", base.split)?,
            corpus: kv.raw("data.corpus").filter(|s| !s.is_empty()).map(PathBuf::from),
            eval_split: kv.get_or("eval.split", base.eval_split)?,
            eval_tau: kv.get_or("eval.tau", base.eval_tau)?,
            embedder: EmbedderConfig {
                backend,
                endpoint: kv.raw("embedder.endpoint").filter(|s| !s.is_empty()).map(str::to_string),
                seed: kv.get_or("embedder.seed", base.embedder.seed)?,
                timeout_ms: kv.get_or("embedder.timeout_ms", base.embedder.timeout_ms)?,
                max_attempts: kv.get_or("embedder.max_attempts", base.embedder.max_attempts)?,
            },
            model,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    /// Reads a config file, resolving a relative `data.root` and
    /// `data.corpus` against the file's directory, then applies `MMC_SEED`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.data_root.is_relative() {
            config.data_root = base.join(&config.data_root);
        }
        if let Some(c) = config.corpus.as_mut().filter(|c| c.is_relative()) {
            *c = base.join(&*c);
        }
        config.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(config)
    }

    /// Replaces the seed with `value` when it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed: u64 = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Parse { key: SEED_ENV.into(), value: v.into() })?;
            self.set_seed(seed);
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.init_seed = seed;
    }
}
