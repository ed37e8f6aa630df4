use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::data::{pick_view, TripleRecord, ViewMode};
use crate::encoders::{build_embedder, embed_image_global, embed_text_global, EmbedderBackend, GlobalFeature};
use crate::fusion::{Checkpoint, CompletionModel, Globals, SampleInputs};
use crate::geometry::{Point, PointCloud};
use crate::nn::Gradients;
use crate::rng::seeded_rng;

use super::config::TrainConfig;
use super::ledger::{LedgerEvent, RunLedger};
use super::optim::Adam;
use super::samples::{load_records, normalized_pair, record_prompt};
use super::{parallel_map, HarnessError, Result};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from this checkpoint of the same config.
    pub resume: Option<PathBuf>,
    /// Stop after this epoch even if the config asks for more.
    pub stop_after: Option<usize>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub ledger: RunLedger,
    pub model: CompletionModel,
    /// The most recent checkpoint written by this run directory.
    pub last_checkpoint: Option<PathBuf>,
}

/// SHA-256 of the canonical config text.
pub fn config_hash(config: &TrainConfig) -> String {
    hex::encode(Sha256::digest(config.to_text().as_bytes()))
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Per-model state that does not change during training.
struct Prepared {
    partial: PointCloud,
    gt: Vec<Point>,
    text: Option<GlobalFeature>,
}

/// Frozen image embeddings, filled as views are first drawn.
#[derive(Default)]
struct VisualCache(HashMap<(usize, usize), GlobalFeature>);

fn prepare(model: &CompletionModel, records: &[TripleRecord], embedder: &dyn EmbedderBackend) -> Result<Vec<Prepared>> {
    let f = &model.config.fusion;
    let needs_text = f.use_text_global && (f.stage1_active() || f.stage2_active());
    records
        .iter()
        .map(|r| {
            let (partial, gt) = normalized_pair(r)?;
            let prompt = record_prompt(r, f.use_rich_text, embedder)?;
            let text = if needs_text { Some(embed_text_global(&prompt, embedder)?) } else { None };
            Ok(Prepared { partial: model.prepare_partial(&partial)?, gt: gt.into_points(), text })
        })
        .collect()
}

fn sample_inputs(
    model: &CompletionModel,
    record: &TripleRecord,
    index: usize,
    prepared: &Prepared,
    view: ViewMode,
    cache: &mut VisualCache,
    embedder: &dyn EmbedderBackend,
) -> Result<SampleInputs> {
    let image = pick_view(record, view)?;
    let f = &model.config.fusion;
    let visual = if f.use_visual_global && (f.stage1_active() || f.stage2_active()) {
        let key = (index, image.view_id());
        if !cache.0.contains_key(&key) {
            cache.0.insert(key, embed_image_global(&image, embedder)?);
        }
        cache.0.get(&key).cloned()
    } else {
        None
    };
    Ok(SampleInputs { partial: prepared.partial.clone(), image, globals: Globals { text: prepared.text.clone(), visual } })
}

/// Visiting order of the samples in `epoch`, fixed by the seed.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, "shuffle", &(epoch as u64).to_le_bytes()));
    order
}

fn relative(path: &Path, dir: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

fn save_checkpoint(model: &CompletionModel, adam: &Adam, config: &TrainConfig, hash: &str, epoch: usize, dir: &Path) -> Result<(PathBuf, String)> {
    let mut meta = config.to_kv();
    meta.set("run.epoch", epoch);
    meta.set("run.adam_step", adam.step);
    meta.set("run.config_hash", hash);
    let ck = model.to_checkpoint(meta, adam.state_arrays(&model.params));
    let path = dir.join(checkpoint_name(epoch));
    let sha = ck.save(&path)?;
    Ok((path, sha))
}

fn dump_diagnostics(dir: &Path, epoch: usize, batch: usize, ids: &[&str], losses: &[f64], model: &CompletionModel) -> Result<PathBuf> {
    let path = dir.join(format!("nonfinite_epoch{epoch:04}_batch{batch:04}.json"));
    let norms: Vec<_> = model.params.norms().into_iter().map(|(name, norm)| json!({"param": name, "norm": norm.to_string()})).collect();
    let body = json!({
        "epoch": epoch,
        "batch": batch,
        "model_ids": ids,
        "losses": losses.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        "weight_norms": norms,
    });
    let text = serde_json::to_string_pretty(&body).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn params_finite(model: &CompletionModel) -> bool {
    model.params.ids().all(|id| model.params.value(id).iter().all(|v| v.is_finite()))
}

/// Trains `config.model` on `config.split`, writing the ledger and
/// checkpoints into `out_dir`.
///
/// Each step averages the per-sample Chamfer loss over the batch. Epoch order
/// and training views depend only on the seed and epoch number, so a resumed
/// run continues exactly where the checkpoint left off.
pub fn train(config: &TrainConfig, out_dir: &Path, options: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let records = load_records(&config.data_root, &config.split, config.corpus.as_deref())?;
    let embedder = build_embedder(&config.embedder)?;
    let hash = config_hash(config);

    let mut model = CompletionModel::new(config.model.clone())?;
    let mut adam = Adam::new(&model.params, config.lr, config.beta1, config.beta2, config.eps);
    let mut ledger = RunLedger::open(out_dir)?;
    let mut first_epoch = 1;
    match &options.resume {
        Some(ck_path) => {
            let ck = Checkpoint::load(ck_path)?;
            let stored: String = ck.meta.get("run.config_hash")?;
            if stored != hash {
                return Err(HarnessError::Resume(format!("{} was written by a different config", ck_path.display())));
            }
            model = CompletionModel::from_checkpoint(&ck, Some(&config.model))?;
            let epoch: usize = ck.meta.get("run.epoch")?;
            adam.restore(&model.params, &ck, ck.meta.get("run.adam_step")?)?;
            first_epoch = epoch + 1;
            ledger.append(LedgerEvent::Resume { epoch, checkpoint: relative(ck_path, out_dir) })?;
        }
        None => {
            if !ledger.events.is_empty() {
                return Err(HarnessError::Invalid(format!("{} already holds a run; resume it or pick another directory", out_dir.display())));
            }
            ledger.append(LedgerEvent::Start {
                config_hash: hash.clone(),
                seed: config.seed,
                parameters: model.parameter_count(),
                samples: records.len(),
                epochs: config.epochs,
            })?;
        }
    }

    let prepared = prepare(&model, &records, embedder.as_ref())?;
    let mut cache = VisualCache::default();
    let workers = config.effective_workers();
    let last_epoch = options.stop_after.map_or(config.epochs, |s| s.min(config.epochs));
    let mut last_checkpoint = ledger.last_checkpoint();

    for epoch in first_epoch..=last_epoch {
        let started = Instant::now();
        let view = ViewMode::Train { seed: config.seed, epoch: epoch as u64 };
        let mut epoch_loss = 0.0;
        for (b, batch) in epoch_order(records.len(), config.seed, epoch).chunks(config.batch_size).enumerate() {
            let inputs = batch
                .iter()
                .map(|&i| sample_inputs(&model, &records[i], i, &prepared[i], view, &mut cache, embedder.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let jobs: Vec<(&SampleInputs, &[Point])> = inputs.iter().zip(batch).map(|(x, &i)| (x, prepared[i].gt.as_slice())).collect();
            let results = parallel_map(&jobs, workers, |(x, gt)| model.loss_and_grad(x, gt));

            let mut grads = Gradients::zeros_like(&model.params);
            let mut losses = Vec::with_capacity(batch.len());
            for r in results {
                let (l, g) = r?;
                losses.push(l);
                grads.add_assign(&g);
            }
            let finite = losses.iter().all(|l| l.is_finite()) && grads.is_finite();
            if finite {
                grads.scale(1.0 / batch.len() as f64);
                adam.apply(&mut model.params, &grads);
            }
            if !finite || !params_finite(&model) {
                let ids: Vec<&str> = batch.iter().map(|&i| records[i].model_id.as_str()).collect();
                let dump = dump_diagnostics(out_dir, epoch, b, &ids, &losses, &model)?;
                ledger.append(LedgerEvent::Abort { epoch, batch: b, dump: relative(&dump, out_dir) })?;
                return Err(HarnessError::NonFiniteLoss { epoch, batch: b, dump });
            }
            epoch_loss += losses.iter().sum::<f64>();
        }
        let mean_loss = epoch_loss / records.len() as f64;
        let wall_ms = started.elapsed().as_millis() as u64;
        log::info!("epoch {epoch}/{}: loss {mean_loss:.6} ({wall_ms} ms)", config.epochs);
        ledger.append(LedgerEvent::Epoch { epoch, mean_loss, wall_ms })?;
        if epoch % config.checkpoint_every == 0 || epoch == config.epochs {
            let (path, sha256) = save_checkpoint(&model, &adam, config, &hash, epoch, out_dir)?;
            ledger.append(LedgerEvent::Checkpoint { epoch, path: relative(&path, out_dir), sha256 })?;
            last_checkpoint = Some(path);
        }
    }
    Ok(TrainOutcome { ledger, model, last_checkpoint })
}

/// The run settings stored alongside a checkpoint's weights.
pub fn checkpoint_train_config(ck: &Checkpoint) -> Option<TrainConfig> {
    let mut kv = KeyValues::new();
    for (k, v) in ck.meta.iter().filter(|(k, _)| !k.starts_with("run.")) {
        kv.set(k, v);
    }
    kv.merge(&ck.config);
    TrainConfig::from_kv(&kv).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::fusion::ModelConfig;

    fn tiny_config(root: &Path) -> TrainConfig {
        let mut c = TrainConfig::desk();
        c.data_root = root.to_path_buf();
        c.split = "all".into();
        c.model = ModelConfig { init_seed: c.seed, ..ModelConfig::toy() };
        c.model.fusion.output_points = 32;
        c.epochs = 4;
        c.batch_size = 3;
        c.checkpoint_every = 2;
        c.lr = 1e-2;
        c.workers = 2;
        c
    }

    fn dataset() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        synth_generate(dir.path(), 2, &["chair", "lamp"], 11).unwrap();
        dir
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(10, 1, 3);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(10, 1, 3));
        assert_ne!(a, epoch_order(10, 1, 4));
        assert_ne!(a, epoch_order(10, 2, 3));
    }

    #[test]
    fn writes_ledger_and_checkpoints() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let config = tiny_config(data.path());
        let run = train(&config, out.path(), &TrainOptions::default()).unwrap();
        let losses = run.ledger.epoch_losses();
        assert_eq!(losses.iter().map(|(e, _)| *e).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert!(losses.iter().all(|(_, l)| l.is_finite() && *l > 0.0));
        let cks = run.ledger.checkpoints();
        assert_eq!(cks.iter().map(|(e, _, _)| *e).collect::<Vec<_>>(), [2, 4]);
        run.ledger.verify().unwrap();
        assert_eq!(run.last_checkpoint, Some(out.path().join("epoch_0004.ckpt")));
        assert!(matches!(run.ledger.events[0], LedgerEvent::Start { samples: 4, .. }));

        let ck = Checkpoint::load(out.path().join("epoch_0004.ckpt")).unwrap();
        assert_eq!(CompletionModel::from_checkpoint(&ck, None).unwrap().params, run.model.params);
        assert_eq!(checkpoint_train_config(&ck).unwrap(), config);

        // A second fresh run into the same directory is refused.
        assert!(matches!(train(&config, out.path(), &TrainOptions::default()), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn resume_continues_bitwise() {
        let data = dataset();
        let config = tiny_config(data.path());
        let full_dir = tempfile::tempdir().unwrap();
        let full = train(&config, full_dir.path(), &TrainOptions::default()).unwrap();

        let part_dir = tempfile::tempdir().unwrap();
        train(&config, part_dir.path(), &TrainOptions { stop_after: Some(2), ..Default::default() }).unwrap();
        let resumed = train(
            &config,
            part_dir.path(),
            &TrainOptions { resume: Some(part_dir.path().join("epoch_0002.ckpt")), ..Default::default() },
        )
        .unwrap();
        assert_eq!(resumed.model.params, full.model.params);
        assert_eq!(resumed.ledger.epoch_losses(), full.ledger.epoch_losses());
        assert_eq!(
            std::fs::read(part_dir.path().join("epoch_0004.ckpt")).unwrap(),
            std::fs::read(full_dir.path().join("epoch_0004.ckpt")).unwrap()
        );

        let mut other = config.clone();
        other.lr = 0.5;
        let err = train(&other, part_dir.path(), &TrainOptions { resume: Some(part_dir.path().join("epoch_0002.ckpt")), ..Default::default() });
        assert!(matches!(err, Err(HarnessError::Resume(_))));
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let data = dataset();
        let mut config = tiny_config(data.path());
        config.epochs = 2;
        let a = train(&config, tempfile::tempdir().unwrap().path(), &TrainOptions::default()).unwrap();
        config.workers = 1;
        let b_dir = tempfile::tempdir().unwrap();
        let b = train(&config, b_dir.path(), &TrainOptions::default()).unwrap();
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn non_finite_loss_aborts_with_a_dump() {
        let data = dataset();
        let out = tempfile::tempdir().unwrap();
        let mut config = tiny_config(data.path());
        config.lr = 1e300;
        let err = train(&config, out.path(), &TrainOptions::default()).unwrap_err();
        let HarnessError::NonFiniteLoss { epoch, dump, .. } = err else { panic!("{err}") };
        assert_eq!(epoch, 1);
        let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dump).unwrap()).unwrap();
        assert_eq!(body["model_ids"].as_array().unwrap().len(), 3);
        assert!(!body["weight_norms"].as_array().unwrap().is_empty());
        let ledger = RunLedger::open(out.path()).unwrap();
        assert!(matches!(ledger.events.last(), Some(LedgerEvent::Abort { .. })));
    }
}
