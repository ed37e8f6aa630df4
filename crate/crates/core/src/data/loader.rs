use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::Rng;

use super::layout::{load_render, scan_models, ModelEntry, GT_FILE, PARTIAL_FILE};
use super::split::{SplitSpec, Subset};
use super::{DataError, Result};
use crate::corpus::{read_corpus, ComponentTaxonomy};
use crate::encoders::{RenderedImage, VIEW_COUNT};
use crate::geometry::{read_xyz, PointCloud};
use crate::rng::seeded_rng;

pub const GT_POINTS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct TripleRecord {
    pub model_id: String,
    pub category: String,
    pub partial: PointCloud,
    pub gt: PointCloud,
    pub renders: Vec<PathBuf>,
    pub text: Option<String>,
}

impl TripleRecord {
    pub fn validate(&self, known: &BTreeSet<String>) -> Result<()> {
        let bad = |reason: String| Err(DataError::InvalidRecord { model_id: self.model_id.clone(), reason });
        if self.gt.len() != GT_POINTS {
            return bad(format!("complete cloud has {} points, expected {GT_POINTS}", self.gt.len()));
        }
        if self.renders.len() != VIEW_COUNT {
            return bad(format!("{} renders, expected {VIEW_COUNT}", self.renders.len()));
        }
        if let Some(missing) = self.renders.iter().find(|p| !p.is_file()) {
            return bad(format!("missing render {}", missing.display()));
        }
        if !known.contains(&self.category) {
            return bad(format!("unknown category `{}`", self.category));
        }
        Ok(())
    }
}

/// Counters shared between a loader and whoever consumes it.
#[derive(Debug, Default)]
pub struct LoaderStats {
    pub loaded: AtomicUsize,
    pub skipped: AtomicUsize,
    pub missing_text: AtomicUsize,
    /// Records built but not yet handed to the consumer.
    pub in_flight: AtomicUsize,
    pub peak_in_flight: AtomicUsize,
}

impl LoaderStats {
    fn enter(&self) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone)]
pub struct LoaderOptions {
    pub known_categories: BTreeSet<String>,
}

impl Default for LoaderOptions {
    fn default() -> Self {
        Self { known_categories: ComponentTaxonomy::default().categories().map(str::to_string).collect() }
    }
}

/// Lazily reads the selected models in model-id order.
///
/// A record that fails to load or validate is skipped and logged. Once more
/// than `max(1, total / 100)` records have been skipped the loader yields a
/// [`DataError::TooManySkips`] and stops.
#[derive(Debug)]
pub struct TripleLoader {
    pending: VecDeque<ModelEntry>,
    texts: Option<HashMap<String, String>>,
    known: BTreeSet<String>,
    stats: Arc<LoaderStats>,
    total: usize,
    allowed_skips: usize,
    failed: bool,
}

pub fn load_triples(root: &Path, split: &SplitSpec, subset: Subset, corpus: Option<&Path>, options: LoaderOptions) -> Result<TripleLoader> {
    split.validate()?;
    let models = split.select(&scan_models(root)?, subset);
    let texts = match corpus {
        Some(path) => Some(
            read_corpus(path)
                .map_err(|e| DataError::Corpus(e.to_string()))?
                .into_iter()
                .map(|e| (e.model_id, e.description))
                .collect(),
        ),
        None => None,
    };
    let total = models.len();
    Ok(TripleLoader {
        pending: models.into(),
        texts,
        known: options.known_categories,
        stats: Arc::default(),
        total,
        allowed_skips: (total / 100).max(1),
        failed: false,
    })
}

impl TripleLoader {
    pub fn stats(&self) -> Arc<LoaderStats> {
        Arc::clone(&self.stats)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn build(&self, m: &ModelEntry) -> Result<TripleRecord> {
        let read = |name: &str| {
            let path = m.dir.join(name);
            read_xyz(&path).map_err(|e| DataError::Malformed { path, reason: e.to_string() })
        };
        let record = TripleRecord {
            model_id: m.model_id.clone(),
            category: m.category.clone(),
            partial: read(PARTIAL_FILE)?,
            gt: read(GT_FILE)?,
            renders: m.render_paths(),
            text: self.texts.as_ref().and_then(|t| t.get(&m.model_id).cloned()),
        };
        record.validate(&self.known)?;
        Ok(record)
    }

    /// Moves loading to a background thread that stays at most `depth`
    /// records ahead of the consumer.
    pub fn prefetch(self, depth: usize) -> Prefetch {
        let depth = depth.max(1);
        let stats = self.stats();
        let (tx, rx) = channel();
        // The producer needs a permit to build a record; the consumer returns
        // it only after taking the record off the gauge.
        let (permit_tx, permit_rx) = sync_channel(depth);
        for _ in 0..depth {
            permit_tx.send(()).expect("receiver alive");
        }
        let handle = std::thread::spawn(move || {
            let stats = self.stats();
            let mut loader = self;
            while permit_rx.recv().is_ok() {
                let Some(item) = loader.next() else { break };
                stats.enter();
                if tx.send(item).is_err() {
                    break;
                }
            }
        });
        Prefetch { rx, permits: permit_tx, stats, handle: Some(handle) }
    }
}

impl Iterator for TripleLoader {
    type Item = Result<TripleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        while let Some(m) = self.pending.pop_front() {
            match self.build(&m) {
                Ok(record) => {
                    if self.texts.is_some() && record.text.is_none() {
                        self.stats.missing_text.fetch_add(1, Ordering::SeqCst);
                    }
                    self.stats.loaded.fetch_add(1, Ordering::SeqCst);
                    return Some(Ok(record));
                }
                Err(e) => {
                    let skipped = self.stats.skipped.fetch_add(1, Ordering::SeqCst) + 1;
                    log::warn!("skipping model {} ({}): {e}", m.model_id, m.category);
                    if skipped > self.allowed_skips {
                        self.failed = true;
                        return Some(Err(DataError::TooManySkips { skipped, total: self.total, allowed: self.allowed_skips }));
                    }
                }
            }
        }
        None
    }
}

/// Bounded background loader; see [`TripleLoader::prefetch`].
#[derive(Debug)]
pub struct Prefetch {
    rx: Receiver<Result<TripleRecord>>,
    permits: SyncSender<()>,
    stats: Arc<LoaderStats>,
    handle: Option<JoinHandle<()>>,
}

impl Prefetch {
    pub fn stats(&self) -> Arc<LoaderStats> {
        Arc::clone(&self.stats)
    }
}

impl Iterator for Prefetch {
    type Item = Result<TripleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.rx.recv() {
            Ok(item) => {
                self.stats.leave();
                let _ = self.permits.send(());
                Some(item)
            }
            Err(_) => {
                if let Some(h) = self.handle.take() {
                    let _ = h.join();
                }
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewMode {
    /// Always view 0.
    Eval,
    /// Uniform over the views, fixed per (seed, model, epoch).
    Train { seed: u64, epoch: u64 },
}

pub fn choose_view(model_id: &str, mode: ViewMode) -> usize {
    match mode {
        ViewMode::Eval => 0,
        ViewMode::Train { seed, epoch } => {
            let mut key = model_id.as_bytes().to_vec();
            key.extend_from_slice(&epoch.to_le_bytes());
            seeded_rng(seed, "view", &key).random_range(0..VIEW_COUNT)
        }
    }
}

pub fn pick_view(record: &TripleRecord, mode: ViewMode) -> Result<RenderedImage> {
    let view = choose_view(&record.model_id, mode);
    load_render(&record.renders[view], view)
}

#[cfg(test)]
mod tests {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    use super::*;
    use crate::corpus::{CorpusEntry, FLAG_TOO_SHORT};
    use crate::data::layout::{split_path, write_split};
    use crate::data::synth::synth_generate;

    fn dataset() -> (tempfile::TempDir, Vec<ModelEntry>) {
        let dir = tempfile::tempdir().unwrap();
        let models = synth_generate(dir.path(), 3, &["chair", "table", "lamp", "airplane"], 5).unwrap();
        (dir, models)
    }

    fn ids(records: &[TripleRecord]) -> Vec<String> {
        records.iter().map(|r| r.model_id.clone()).collect()
    }

    #[test]
    fn loads_split_and_joins_text() {
        let (dir, models) = dataset();
        let chosen: Vec<String> = models.iter().take(8).map(|m| m.model_id.clone()).collect();
        write_split(&split_path(dir.path(), "eight"), &chosen).unwrap();
        let (split, subset) = SplitSpec::resolve(dir.path(), "eight", &models).unwrap();

        let entry = CorpusEntry {
            model_id: chosen[2].clone(),
            category: "x".into(),
            view_id: 0,
            answers: vec![],
            description: "a short text".into(),
            word_count: 3,
            flags: vec![FLAG_TOO_SHORT.into()],
        };
        let corpus = dir.path().join("corpus.jsonl");
        std::fs::write(&corpus, format!("{}\n", serde_json::to_string(&entry).unwrap())).unwrap();

        let loader = load_triples(dir.path(), &split, subset, Some(&corpus), LoaderOptions::default()).unwrap();
        let stats = loader.stats();
        let records: Vec<TripleRecord> = loader.map(|r| r.unwrap()).collect();
        assert_eq!(ids(&records), chosen);
        assert_eq!(records[2].text.as_deref(), Some("a short text"));
        assert!(records[3].text.is_none());
        assert_eq!(stats.missing_text.load(Ordering::SeqCst), 7);
        assert!(records.iter().all(|r| r.gt.len() == GT_POINTS && r.renders.len() == VIEW_COUNT));
    }

    #[test]
    fn corrupt_files_are_skipped_until_the_limit() {
        let (dir, models) = dataset();
        let all = SplitSpec::from_ids(&models.iter().map(|m| m.model_id.clone()).collect::<Vec<_>>(), &models).unwrap();
        let mut text = std::fs::read_to_string(models[4].dir.join(PARTIAL_FILE)).unwrap();
        text.push_str("1.0 oops 2.0\n");
        std::fs::write(models[4].dir.join(PARTIAL_FILE), text).unwrap();
        let results: Vec<_> = load_triples(dir.path(), &all, Subset::Eval, None, LoaderOptions::default()).unwrap().collect();
        assert_eq!(results.len(), 11);
        assert!(results.iter().all(Result::is_ok));

        std::fs::write(models[7].dir.join(GT_FILE), "0 0 0\n").unwrap();
        let results: Vec<_> = load_triples(dir.path(), &all, Subset::Eval, None, LoaderOptions::default()).unwrap().collect();
        assert!(matches!(results.last(), Some(Err(DataError::TooManySkips { skipped: 2, total: 12, allowed: 1 }))));
    }

    #[test]
    fn unknown_category_is_rejected_by_validation() {
        let (dir, _) = dataset();
        let options = LoaderOptions { known_categories: ["chair".to_string()].into() };
        let split = SplitSpec { train_categories: vec!["chair".into(), "lamp".into()], ..SplitSpec::default() };
        let results: Vec<_> = load_triples(dir.path(), &split, Subset::Train, None, options).unwrap().collect();
        assert!(results.iter().any(|r| matches!(r, Err(DataError::TooManySkips { .. }))));
    }

    #[test]
    fn prefetch_preserves_order_and_bounds_residency() {
        let (dir, models) = dataset();
        let all = SplitSpec::from_ids(&models.iter().map(|m| m.model_id.clone()).collect::<Vec<_>>(), &models).unwrap();
        let sequential: Vec<TripleRecord> =
            load_triples(dir.path(), &all, Subset::Eval, None, LoaderOptions::default()).unwrap().map(|r| r.unwrap()).collect();
        for depth in [1, 3] {
            let pf = load_triples(dir.path(), &all, Subset::Eval, None, LoaderOptions::default()).unwrap().prefetch(depth);
            let stats = pf.stats();
            let mut got = Vec::new();
            for r in pf {
                // Give the producer time to run ahead as far as it can.
                std::thread::sleep(std::time::Duration::from_millis(5));
                got.push(r.unwrap());
            }
            assert_eq!(got, sequential);
            let peak = stats.peak_in_flight.load(Ordering::SeqCst);
            assert!(peak >= 1 && peak <= depth, "depth {depth}, peak {peak}");
        }
    }

    #[test]
    fn view_policy() {
        let (dir, models) = dataset();
        let (split, subset) = SplitSpec::resolve(dir.path(), "all", &models).unwrap();
        let record = load_triples(dir.path(), &split, subset, None, LoaderOptions::default()).unwrap().next().unwrap().unwrap();
        assert_eq!(pick_view(&record, ViewMode::Eval).unwrap().view_id(), 0);
        let mode = ViewMode::Train { seed: 3, epoch: 1 };
        assert_eq!(pick_view(&record, mode).unwrap(), pick_view(&record, mode).unwrap());
    }

    #[test]
    fn training_views_are_uniform() {
        let mut counts = [0f64; VIEW_COUNT];
        for seed in 0..1000 {
            counts[choose_view("chair-0001", ViewMode::Train { seed, epoch: 0 })] += 1.0;
        }
        let expected = 1000.0 / VIEW_COUNT as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((VIEW_COUNT - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }
}
