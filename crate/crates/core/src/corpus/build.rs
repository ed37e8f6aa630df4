use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backend::{ImageRef, TextBackend};
use super::compose::{compose_description, compress, forbidden_components, MAX_WORDS, MIN_WORDS};
use super::qa::{ask_appearance, ask_category, ask_existence, ask_quantity, QAAnswer, QuestionKind};
use super::taxonomy::ComponentTaxonomy;
use super::{mentions, word_count, CorpusError, Result};
use crate::data::{scan_models, ModelEntry};
use crate::encoders::VIEW_COUNT;
use crate::rng::seeded_rng;

pub const FLAG_TOO_SHORT: &str = "too_short";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub model_id: String,
    pub category: String,
    pub view_id: u32,
    pub answers: Vec<QAAnswer>,
    pub description: String,
    pub word_count: usize,
    pub flags: Vec<String>,
}

impl CorpusEntry {
    /// Checks the record's own invariants against `taxonomy`.
    pub fn validate(&self, taxonomy: &ComponentTaxonomy) -> Result<()> {
        let bad = |reason: String| Err(CorpusError::Composition(format!("{}: {reason}", self.model_id)));
        if self.view_id as usize >= VIEW_COUNT {
            return bad(format!("view {} out of range", self.view_id));
        }
        if self.word_count != word_count(&self.description) {
            return bad("word_count does not match the description".into());
        }
        if !self.flags.iter().any(|f| f == FLAG_TOO_SHORT) && !(MIN_WORDS..=MAX_WORDS).contains(&self.word_count) {
            return bad(format!("{} words", self.word_count));
        }
        for a in &self.answers {
            if a.kind == QuestionKind::Existence && a.existence() == Some(false) {
                let c = a.component.as_deref().unwrap_or_default();
                if mentions(&self.description, c) {
                    return bad(format!("mentions absent component `{c}`"));
                }
            }
        }
        taxonomy.components(&self.category)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOptions {
    pub seed: u64,
    /// Keep entries already in the output file and only add missing models.
    pub resume: bool,
    /// Models questioned concurrently.
    pub workers: usize,
    /// Stop after writing this many new entries.
    pub limit: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { seed: 0, resume: false, workers: 4, limit: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildSummary {
    pub written: usize,
    pub kept: usize,
    /// `(model_id, reason)` for every model left out.
    pub skipped: Vec<(String, String)>,
}

/// View questioned for a model: uniform over the views, fixed by seed and id.
pub fn corpus_view(seed: u64, model_id: &str) -> u32 {
    seeded_rng(seed, "corpus-view", model_id.as_bytes()).random_range(0..VIEW_COUNT as u32)
}

fn describe(model: &ModelEntry, seed: u64, taxonomy: &ComponentTaxonomy, backend: &dyn TextBackend) -> Result<CorpusEntry> {
    let view_id = corpus_view(seed, &model.model_id);
    let path = model.render_path(view_id as usize);
    if !path.is_file() {
        return Err(CorpusError::Io(format!("missing render {}", path.display())));
    }
    let image = ImageRef { model_id: model.model_id.clone(), view_id, path };
    let cat = model.category.as_str();
    let mut flags = Vec::new();
    let mut answers = vec![ask_category(&image, cat, taxonomy, backend)?];
    for part in taxonomy.components(cat)? {
        let exists = match ask_existence(&image, cat, part, taxonomy, backend) {
            Ok(a) => {
                if a.parse_error {
                    flags.push(format!("existence_unparsed:{part}"));
                }
                let e = a.existence() == Some(true);
                answers.push(a);
                e
            }
            Err(e) => {
                log::warn!("{}: existence of {part} failed: {e}", model.model_id);
                flags.push(format!("existence_failed:{part}"));
                false
            }
        };
        if !exists {
            continue;
        }
        match ask_quantity(&image, cat, part, taxonomy, backend) {
            Ok(a) => answers.push(a),
            Err(e) => {
                log::warn!("{}: quantity of {part} failed: {e}", model.model_id);
                flags.push(format!("quantity_failed:{part}"));
            }
        }
        match ask_appearance(&image, cat, part, taxonomy, backend) {
            Ok(a) => answers.push(a),
            Err(e) => {
                log::warn!("{}: appearance of {part} failed: {e}", model.model_id);
                flags.push(format!("appearance_failed:{part}"));
            }
        }
    }
    let text = compose_description(cat, &answers, taxonomy)?;
    let forbidden = forbidden_components(cat, &answers, taxonomy)?;
    let pad: Vec<String> = answers.iter().filter(|a| a.kind == QuestionKind::Appearance).map(|a| a.raw_text.clone()).collect();
    let description = match compress(&text, &pad, &forbidden, backend) {
        Ok(c) => {
            if c.fallback {
                flags.push("compress_fallback".into());
            }
            c.text
        }
        Err(CorpusError::TooShort(_)) => {
            flags.push(FLAG_TOO_SHORT.into());
            text
        }
        Err(e) => return Err(e),
    };
    let entry = CorpusEntry {
        model_id: model.model_id.clone(),
        category: model.category.clone(),
        view_id,
        answers,
        word_count: word_count(&description),
        description,
        flags,
    };
    entry.validate(taxonomy)?;
    Ok(entry)
}

/// Length of the longest prefix of complete, parseable lines, and their ids.
fn existing_entries(path: &Path) -> Result<(u64, BTreeSet<String>)> {
    let mut ids = BTreeSet::new();
    let mut good = 0u64;
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<CorpusEntry>(line.trim_end()) {
            Ok(e) => {
                ids.insert(e.model_id);
                good += n as u64;
            }
            Err(_) => break,
        }
    }
    Ok((good, ids))
}

/// Questions every model under `root` whose category is in `taxonomy` and
/// writes one JSON line per model to `out`, in model-id order.
///
/// Entries are written and flushed one at a time, so an interrupted run
/// leaves a valid prefix. With `resume` that prefix is kept (a torn final
/// line is dropped) and only the remaining models are processed, giving the
/// same file as an uninterrupted run.
pub fn build_corpus(root: &Path, out: &Path, taxonomy: &ComponentTaxonomy, backend: &dyn TextBackend, options: &BuildOptions) -> Result<BuildSummary> {
    let models = scan_models(root).map_err(|e| CorpusError::Io(e.to_string()))?;
    let mut summary = BuildSummary::default();
    let mut done = BTreeSet::new();
    let file = if options.resume && out.exists() {
        let (len, ids) = existing_entries(out)?;
        let f = OpenOptions::new().write(true).open(out)?;
        f.set_len(len)?;
        summary.kept = ids.len();
        done = ids;
        OpenOptions::new().append(true).open(out)?
    } else {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::File::create(out)?
    };
    let mut writer = std::io::BufWriter::new(file);

    let mut pending = Vec::new();
    for m in models {
        if done.contains(&m.model_id) {
            continue;
        }
        if !taxonomy.contains(&m.category) {
            log::warn!("skipping {}: category `{}` not in taxonomy", m.model_id, m.category);
            summary.skipped.push((m.model_id, format!("category `{}` not in taxonomy", m.category)));
            continue;
        }
        pending.push(m);
    }
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }

    for chunk in pending.chunks(options.workers.max(1)) {
        let results: Vec<Result<CorpusEntry>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|m| s.spawn(move || describe(m, options.seed, taxonomy, backend))).collect();
            handles.into_iter().map(|h| h.join().expect("corpus worker panicked")).collect()
        });
        for (m, result) in chunk.iter().zip(results) {
            match result {
                Ok(entry) => {
                    let line = serde_json::to_string(&entry).expect("entry serialises");
                    writeln!(writer, "{line}")?;
                    writer.flush()?;
                    summary.written += 1;
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", m.model_id);
                    summary.skipped.push((m.model_id.clone(), e.to_string()));
                }
            }
        }
    }
    Ok(summary)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CorpusError::Format { line: i + 1, reason: e.to_string() }))
        .collect()
}
