//! Fine-grained text corpus construction.
//!
//! Each shape is described by asking a question-answering backend about its
//! category and its components, composing the answers into one paragraph and
//! compressing that paragraph to 50..=58 words.

mod backend;
mod build;
mod compose;
mod qa;
mod taxonomy;

pub use backend::{
    BackendError, BackendRequest, ExternalTextBackend, ImageRef, RecordingBackend, ReplayBackend, StubTextBackend, Task, TextBackend,
    TranscriptLine,
};
pub use build::{build_corpus, read_corpus, BuildOptions, BuildSummary, CorpusEntry, FLAG_TOO_SHORT};
pub use compose::{compose_description, compress, compress_extractive, Compressed, FILLER_SENTENCES, MAX_WORDS, MIN_WORDS, TOO_SHORT_WORDS};
pub use qa::{ask_appearance, ask_category, ask_existence, ask_quantity, parse_count, parse_yes_no, Count, Parsed, QAAnswer, QuestionKind};
pub use taxonomy::ComponentTaxonomy;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("composition: {0}")]
    Composition(String),
    #[error("text has {0} words; at least 10 are needed for compression")]
    TooShort(usize),
    #[error("corpus line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Words of `text`: whitespace-separated pieces with punctuation removed,
/// dropping pieces that were pure punctuation.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn word_count(text: &str) -> usize {
    words(text).len()
}

/// Regular English plural of a lowercase noun.
pub fn plural(term: &str) -> String {
    if let Some(stem) = term.strip_suffix("f") {
        format!("{stem}ves")
    } else if term.ends_with('s') || term.ends_with('x') || term.ends_with("ch") || term.ends_with("sh") {
        format!("{term}es")
    } else if term.ends_with('y') && !term.ends_with("ay") && !term.ends_with("ey") && !term.ends_with("oy") {
        format!("{}ies", &term[..term.len() - 1])
    } else {
        format!("{term}s")
    }
}

/// Whether `text` contains `term` or its plural as a whole word, ignoring case.
pub fn mentions(text: &str, term: &str) -> bool {
    let term = term.to_lowercase();
    let pl = plural(&term);
    words(text).iter().any(|w| {
        let w = w.to_lowercase();
        w == term || w == pl || w == format!("{term}s")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_counting_strips_punctuation() {
        assert_eq!(word_count("This is a brown office chair."), 6);
        assert_eq!(word_count("  -- a, b ;c  "), 3);
        assert_eq!(word_count(""), 0);
        assert_eq!(words("four-legged"), vec!["fourlegged"]);
    }

    #[test]
    fn plurals_and_mentions() {
        assert_eq!(plural("leg"), "legs");
        assert_eq!(plural("shelf"), "shelves");
        assert_eq!(plural("bench"), "benches");
        assert_eq!(plural("body"), "bodies");
        assert_eq!(plural("key"), "keys");
        assert!(mentions("The chair has four Legs.", "leg"));
        assert!(!mentions("a legendary design", "leg"));
        assert!(mentions("open shelves", "shelf"));
    }
}
