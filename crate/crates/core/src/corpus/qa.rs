use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::backend::{BackendRequest, ImageRef, Question, Task, TextBackend};
use super::taxonomy::ComponentTaxonomy;
use super::{words, CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Category,
    Existence,
    Quantity,
    Appearance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Count {
    Known(u32),
    Unknown,
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Count::Known(n) => s.serialize_u32(*n),
            Count::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "unknown" => Ok(Count::Unknown),
            serde_json::Value::Number(n) => n
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .map(Count::Known)
                .ok_or_else(|| serde::de::Error::custom("count must be a nonnegative integer")),
            other => Err(serde::de::Error::custom(format!("invalid count {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Parsed {
    Sentence(String),
    Bool(bool),
    Count(Count),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAAnswer {
    pub kind: QuestionKind,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
    pub raw_text: String,
    pub parsed: Parsed,
    /// The reply could not be parsed and `parsed` holds the conservative default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_error: bool,
}

impl QAAnswer {
    pub fn existence(&self) -> Option<bool> {
        match (self.kind, &self.parsed) {
            (QuestionKind::Existence, Parsed::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn count(&self) -> Option<Count> {
        match (self.kind, &self.parsed) {
            (QuestionKind::Quantity, Parsed::Count(c)) => Some(*c),
            _ => None,
        }
    }
}

pub fn question_text(kind: QuestionKind, category: &str, component: Option<&str>) -> String {
    let comp = component.unwrap_or("");
    match kind {
        QuestionKind::Category => format!("Please describe the geometric appearance of the {category}?"),
        QuestionKind::Existence => format!("Does the {category} have {comp}?"),
        QuestionKind::Quantity => format!("How many {comp} does the {category} have"),
        QuestionKind::Appearance => format!("Please provide some rich geometric structure descriptors for {comp} of the {category}?"),
    }
}

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen", "fourteen",
    "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

pub(crate) fn number_word(n: u32) -> Option<&'static str> {
    NUMBER_WORDS.get(n as usize).copied()
}

/// First `yes` or `no` leading the reply, ignoring case and punctuation.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    match words(reply).first().map(|w| w.to_lowercase()).as_deref() {
        Some("yes") => Some(true),
        Some("no") => Some(false),
        _ => None,
    }
}

/// First number in the reply, as digits or a word up to twenty.
pub fn parse_count(reply: &str) -> Count {
    for w in words(reply) {
        if let Ok(n) = w.parse::<u32>() {
            return Count::Known(n);
        }
        let lower = w.to_lowercase();
        if let Some(n) = NUMBER_WORDS.iter().position(|x| *x == lower) {
            return Count::Known(n as u32);
        }
    }
    Count::Unknown
}

fn ask(
    kind: QuestionKind,
    image: &ImageRef,
    category: &str,
    component: Option<&str>,
    taxonomy: &ComponentTaxonomy,
    backend: &dyn TextBackend,
) -> Result<String> {
    let parts = taxonomy.components(category)?;
    if let Some(c) = component {
        if !parts.iter().any(|p| p == c) {
            return Err(CorpusError::Taxonomy(format!("`{c}` is not a component of `{category}`")));
        }
    }
    let prompt = question_text(kind, category, component);
    let question = Question { kind, category: category.into(), component: component.map(Into::into) };
    let request = BackendRequest { task: Task::Vqa, prompt: &prompt, image: Some(image), question: Some(&question) };
    Ok(backend.complete(&request)?.trim().to_string())
}

fn sentence_answer(kind: QuestionKind, category: &str, component: Option<&str>, raw: String) -> QAAnswer {
    QAAnswer { kind, category: category.into(), component: component.map(Into::into), parsed: Parsed::Sentence(raw.clone()), raw_text: raw, parse_error: false }
}

pub fn ask_category(image: &ImageRef, category: &str, taxonomy: &ComponentTaxonomy, backend: &dyn TextBackend) -> Result<QAAnswer> {
    let raw = ask(QuestionKind::Category, image, category, None, taxonomy, backend)?;
    Ok(sentence_answer(QuestionKind::Category, category, None, raw))
}

/// An unparseable reply counts as absent and sets `parse_error`.
pub fn ask_existence(image: &ImageRef, category: &str, component: &str, taxonomy: &ComponentTaxonomy, backend: &dyn TextBackend) -> Result<QAAnswer> {
    let raw = ask(QuestionKind::Existence, image, category, Some(component), taxonomy, backend)?;
    let parsed = parse_yes_no(&raw);
    Ok(QAAnswer {
        kind: QuestionKind::Existence,
        category: category.into(),
        component: Some(component.into()),
        parsed: Parsed::Bool(parsed.unwrap_or(false)),
        parse_error: parsed.is_none(),
        raw_text: raw,
    })
}

pub fn ask_quantity(image: &ImageRef, category: &str, component: &str, taxonomy: &ComponentTaxonomy, backend: &dyn TextBackend) -> Result<QAAnswer> {
    let raw = ask(QuestionKind::Quantity, image, category, Some(component), taxonomy, backend)?;
    Ok(QAAnswer {
        kind: QuestionKind::Quantity,
        category: category.into(),
        component: Some(component.into()),
        parsed: Parsed::Count(parse_count(&raw)),
        parse_error: false,
        raw_text: raw,
    })
}

pub fn ask_appearance(image: &ImageRef, category: &str, component: &str, taxonomy: &ComponentTaxonomy, backend: &dyn TextBackend) -> Result<QAAnswer> {
    let raw = ask(QuestionKind::Appearance, image, category, Some(component), taxonomy, backend)?;
    Ok(sentence_answer(QuestionKind::Appearance, category, Some(component), raw))
}
