use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::compose::compress_extractive;
use super::qa::{number_word, QuestionKind};
use super::plural;
use crate::external::{call_json, ExternalPolicy};
use crate::rng::seeded_rng;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("text backend `{backend}`: {message}")]
pub struct BackendError {
    pub backend: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Question about a rendered view.
    Vqa,
    /// Shorten a description to the target word range.
    Compress,
}

/// The rendered view a question refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub model_id: String,
    pub view_id: u32,
    pub path: PathBuf,
}

impl ImageRef {
    /// Root-independent key used by transcripts.
    pub fn key(&self) -> String {
        format!("{}/{:02}", self.model_id, self.view_id)
    }
}

/// Structured form of a question, for backends that do not parse prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub kind: QuestionKind,
    pub category: String,
    pub component: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BackendRequest<'a> {
    pub task: Task,
    pub prompt: &'a str,
    pub image: Option<&'a ImageRef>,
    pub question: Option<&'a Question>,
}

/// Prompt in, text out.
pub trait TextBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

/// Deterministic offline backend. Replies are a pure function of the image
/// key and the question, so runs are reproducible across machines.
#[derive(Debug, Clone, Default)]
pub struct StubTextBackend;

const STUB_STYLES: &[&str] = &["brown", "white", "black", "grey", "wooden", "metal", "modern", "classic", "compact", "sturdy"];
const STUB_SHAPES: &[&str] = &["rectangular", "round", "slender", "curved", "flat", "tapered", "thick", "cylindrical", "square", "oval"];
const STUB_DETAILS: &[&str] = &[
    "with smooth rounded edges and a balanced profile",
    "with sharp straight edges and a symmetric outline",
    "that narrows gently toward its far end",
    "with a slightly beveled rim along the outer border",
    "and it looks solid with clean uniform proportions",
];

impl StubTextBackend {
    fn answer(image: Option<&ImageRef>, q: &Question) -> String {
        let key = format!(
            "{}|{:?}|{}|{}",
            image.map(ImageRef::key).unwrap_or_default(),
            q.kind,
            q.category,
            q.component.as_deref().unwrap_or("")
        );
        let mut rng = seeded_rng(0, "stub-text", key.as_bytes());
        let cat = &q.category;
        let comp = q.component.as_deref().unwrap_or("part");
        match q.kind {
            QuestionKind::Category => format!("This is a {} {cat}.", STUB_STYLES.choose(&mut rng).unwrap()),
            QuestionKind::Existence => (if rng.random_bool(0.8) { "Yes." } else { "No." }).to_string(),
            QuestionKind::Quantity => {
                let n: u32 = rng.random_range(1..=6);
                let noun = if n == 1 { comp.to_string() } else { plural(comp) };
                format!("The {cat} has {} {noun}.", number_word(n).unwrap())
            }
            QuestionKind::Appearance => format!(
                "The {comp} of this {cat} has a {} appearance {}.",
                STUB_SHAPES.choose(&mut rng).unwrap(),
                STUB_DETAILS.choose(&mut rng).unwrap()
            ),
        }
    }
}

impl TextBackend for StubTextBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        match (request.task, request.question) {
            (Task::Vqa, Some(q)) => Ok(Self::answer(request.image, q)),
            (Task::Vqa, None) => Err(BackendError { backend: "stub".into(), message: "stub needs a structured question".into() }),
            (Task::Compress, _) => compress_extractive(request.prompt, &[], &[])
                .map(|c| c.text)
                .map_err(|e| BackendError { backend: "stub".into(), message: e.to_string() }),
        }
    }
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub prompt: String,
    pub response: String,
}

type ReplayKey = (Task, Option<String>, String);

/// Answers from a fixture transcript; an unrecorded request is an error.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<ReplayKey, String>,
}

impl ReplayBackend {
    pub fn new(lines: impl IntoIterator<Item = TranscriptLine>) -> Self {
        let responses = lines.into_iter().map(|l| ((l.task, l.image, l.prompt), l.response)).collect();
        Self { responses }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let err = |message: String| BackendError { backend: "replay".into(), message };
        let file = std::fs::File::open(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let mut lines = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            lines.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
        }
        Ok(Self::new(lines))
    }
}

impl TextBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let key = (request.task, request.image.map(ImageRef::key), request.prompt.to_string());
        self.responses.get(&key).cloned().ok_or_else(|| BackendError {
            backend: "replay".into(),
            message: format!("no recorded response for {:?} {:?}", key.1, key.2),
        })
    }
}

/// Passes requests through and keeps a transcript that a [`ReplayBackend`]
/// can answer from later.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<TranscriptLine>>,
}

impl<B: TextBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    /// Recorded lines in a stable order, without duplicates.
    pub fn transcript(&self) -> Vec<TranscriptLine> {
        let mut lines = self.log.lock().unwrap().clone();
        lines.sort_by(|a, b| (&a.image, &a.prompt, a.task as u8).cmp(&(&b.image, &b.prompt, b.task as u8)));
        lines.dedup();
        lines
    }

    pub fn write_transcript(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in self.transcript() {
            writeln!(out, "{}", serde_json::to_string(&line).expect("transcript serialises"))?;
        }
        out.flush()
    }
}

impl<B: TextBackend> TextBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let response = self.inner.complete(request)?;
        self.log.lock().unwrap().push(TranscriptLine {
            task: request.task,
            image: request.image.map(ImageRef::key),
            prompt: request.prompt.to_string(),
            response: response.clone(),
        });
        Ok(response)
    }
}

/// External command speaking `{"op", "prompt", "image"}` in and
/// `{"text"}` out.
#[derive(Debug, Clone)]
pub struct ExternalTextBackend {
    endpoint: String,
    policy: ExternalPolicy,
}

impl ExternalTextBackend {
    pub fn new(endpoint: impl Into<String>, policy: ExternalPolicy) -> Self {
        Self { endpoint: endpoint.into(), policy }
    }
}

impl TextBackend for ExternalTextBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let body = json!({
            "op": request.task,
            "prompt": request.prompt,
            "image": request.image.map(|i| i.path.display().to_string()),
        });
        let err = |message: String| BackendError { backend: self.endpoint.clone(), message };
        let reply = call_json(&self.endpoint, &body, &self.policy).map_err(|e| err(e.to_string()))?;
        reply["text"].as_str().map(str::to_string).ok_or_else(|| err("reply has no `text` string".into()))
    }
}
