use std::path::{Path, PathBuf};

use crate::data::ViewMode;
use crate::encoders::{build_embedder, EmbedderBackend, EmbedderConfig};
use crate::fusion::{Checkpoint, CompletionModel, SampleInputs};
use crate::geometry::{chamfer_distance, fscore, MetricReport, PointCloud, DEFAULT_FSCORE_TAU};

use super::samples::{load_records, prepare_sample, EvalSample};
use super::train::checkpoint_train_config;
use super::{parallel_map, Result};

/// Anything that maps a prepared sample to a completed cloud.
pub trait Predictor: Sync {
    fn predict(&self, sample: &EvalSample) -> Result<PointCloud>;
}

pub struct ModelPredictor<'a> {
    pub model: &'a CompletionModel,
    pub embedder: &'a dyn EmbedderBackend,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, s: &EvalSample) -> Result<PointCloud> {
        let inputs = SampleInputs {
            partial: self.model.prepare_partial(&s.partial)?,
            image: s.image.clone(),
            globals: self.model.globals_for(&s.image, &s.prompt, self.embedder)?,
        };
        Ok(self.model.predict(&inputs)?)
    }
}

fn score_samples(predictor: &dyn Predictor, samples: &[EvalSample], tau: f64, workers: usize) -> Result<Vec<(f64, f64)>> {
    parallel_map(samples, workers, |s| -> Result<(f64, f64)> {
        let pred = predictor.predict(s)?;
        Ok((chamfer_distance(pred.points(), s.gt.points())?, fscore(pred.points(), s.gt.points(), tau)?))
    })
    .into_iter()
    .collect()
}

/// Per-category Chamfer distance and F-Score@`tau` of `predictor` on `samples`.
pub fn evaluate_samples(predictor: &dyn Predictor, samples: &[EvalSample], tau: f64, workers: usize) -> Result<MetricReport> {
    let scores = score_samples(predictor, samples, tau, workers)?;
    Ok(MetricReport::from_samples(tau, samples.iter().zip(scores).map(|(s, (cd, f))| (s.category.as_str(), cd, f))))
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub root: PathBuf,
    pub split: String,
    pub corpus: Option<PathBuf>,
    pub tau: f64,
    pub workers: usize,
    /// Overrides the embedder recorded in the checkpoint.
    pub embedder: Option<EmbedderConfig>,
}

impl EvalOptions {
    pub fn new(root: impl Into<PathBuf>, split: impl Into<String>) -> Self {
        Self { root: root.into(), split: split.into(), corpus: None, tau: DEFAULT_FSCORE_TAU, workers: super::default_workers(), embedder: None }
    }
}

/// Scores a checkpoint on a split using view 0 of every model. The checkpoint
/// file is only read.
pub fn evaluate(checkpoint: &Path, options: &EvalOptions) -> Result<MetricReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = CompletionModel::from_checkpoint(&ck, None)?;
    let embedder_config = options
        .embedder
        .clone()
        .or_else(|| checkpoint_train_config(&ck).map(|c| c.embedder))
        .unwrap_or_default();
    let embedder = build_embedder(&embedder_config)?;
    let predictor = ModelPredictor { model: &model, embedder: embedder.as_ref() };
    let records = load_records(&options.root, &options.split, options.corpus.as_deref())?;

    // Samples hold a full image each, so they are built a chunk at a time.
    let mut rows: Vec<(String, f64, f64)> = Vec::with_capacity(records.len());
    for chunk in records.chunks(64) {
        let samples = chunk
            .iter()
            .map(|r| prepare_sample(r, ViewMode::Eval, model.config.fusion.use_rich_text, embedder.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let scores = score_samples(&predictor, &samples, options.tau, options.workers)?;
        rows.extend(samples.iter().zip(scores).map(|(s, (cd, f))| (s.category.clone(), cd, f)));
    }
    let mut report = MetricReport::from_samples(options.tau, rows.iter().map(|(c, cd, f)| (c.as_str(), *cd, *f)));
    report.notes.push(format!("checkpoint={}", Checkpoint::file_hash(checkpoint)?));
    report.notes.push(format!("split={}", options.split));
    Ok(report)
}
