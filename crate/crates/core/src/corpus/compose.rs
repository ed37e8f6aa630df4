use super::backend::{BackendRequest, Task, TextBackend};
use super::qa::{Count, Parsed, QAAnswer, QuestionKind};
use super::taxonomy::ComponentTaxonomy;
use super::{mentions, word_count, CorpusError, Result};

pub const MIN_WORDS: usize = 50;
pub const MAX_WORDS: usize = 58;
/// Texts shorter than this are not worth compressing and are flagged instead.
pub const TOO_SHORT_WORDS: usize = 10;

/// Generic padding, two of each length from 2 to 9 words. None of them names
/// a component of the default taxonomy.
pub const FILLER_SENTENCES: &[&str] = &[
    "Clean lines.",
    "Balanced proportions.",
    "Surfaces appear smooth.",
    "Edges look crisp.",
    "The outline is symmetric.",
    "The form looks compact.",
    "Its overall silhouette looks simple.",
    "The proportions seem evenly distributed.",
    "The structure appears sturdy and stable.",
    "Most surfaces are flat and straight.",
    "The pieces meet at clean regular angles.",
    "The geometry is plain with few details.",
    "The overall shape is simple and clearly organized.",
    "Its visible faces are smooth and evenly finished.",
    "Its surfaces are mostly flat with some gentle curves.",
    "The design joins simple volumes in a tidy arrangement.",
];

/// Splits after `.`, `!` or `?` followed by whitespace or the end of text.
pub(crate) fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = cur.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            cur.clear();
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

fn terminated(s: &str) -> String {
    let s = s.trim().trim_end_matches([',', ';', ':']);
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

fn mentions_any(text: &str, terms: &[&str]) -> bool {
    terms.iter().any(|t| mentions(text, t))
}

/// Components a description must not name: those not confirmed present.
pub(crate) fn forbidden_components<'a>(category: &str, answers: &[QAAnswer], taxonomy: &'a ComponentTaxonomy) -> Result<Vec<&'a str>> {
    let parts = taxonomy.components(category)?;
    Ok(parts
        .iter()
        .filter(|p| {
            !answers
                .iter()
                .any(|a| a.kind == QuestionKind::Existence && a.component.as_deref() == Some(p.as_str()) && a.existence() == Some(true))
        })
        .map(String::as_str)
        .collect())
}

/// Category sentence first, then quantity and appearance sentences of each
/// present component in taxonomy order. Sentences naming a component that is
/// not confirmed present are dropped.
pub fn compose_description(category: &str, answers: &[QAAnswer], taxonomy: &ComponentTaxonomy) -> Result<String> {
    let cats: Vec<&QAAnswer> = answers.iter().filter(|a| a.kind == QuestionKind::Category).collect();
    if cats.len() != 1 {
        return Err(CorpusError::Composition(format!("expected one category answer, found {}", cats.len())));
    }
    let forbidden = forbidden_components(category, answers, taxonomy)?;
    let keep = |s: &str| !mentions_any(s, &forbidden);

    let mut out: Vec<String> = Vec::new();
    let lead: Vec<String> = sentences(&cats[0].raw_text).into_iter().filter(|s| keep(s)).map(|s| terminated(&s)).collect();
    if lead.is_empty() {
        out.push(format!("This is a {category}."));
    } else {
        out.extend(lead);
    }
    for part in taxonomy.components(category)? {
        if forbidden.contains(&part.as_str()) {
            continue;
        }
        let of = |kind| answers.iter().filter(move |a: &&QAAnswer| a.kind == kind && a.component.as_deref() == Some(part.as_str()));
        for a in of(QuestionKind::Quantity) {
            if matches!(a.parsed, Parsed::Count(Count::Known(_))) {
                out.extend(sentences(&a.raw_text).into_iter().filter(|s| keep(s)).map(|s| terminated(&s)));
            }
        }
        for a in of(QuestionKind::Appearance) {
            out.extend(sentences(&a.raw_text).into_iter().filter(|s| keep(s)).map(|s| terminated(&s)));
        }
    }
    Ok(out.join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compressed {
    pub text: String,
    pub word_count: usize,
    /// The backend's output was rejected and the extractive compressor used.
    pub fallback: bool,
}

/// Deterministic compression: whole sentences in order while they fit, then
/// clauses of the first sentence that did not, then `pad` sentences, then
/// generic fillers. Nothing naming a `forbidden` term is added.
pub fn compress_extractive(text: &str, pad: &[String], forbidden: &[&str]) -> Result<Compressed> {
    let total = word_count(text);
    if total < TOO_SHORT_WORDS {
        return Err(CorpusError::TooShort(total));
    }
    if (MIN_WORDS..=MAX_WORDS).contains(&total) {
        return Ok(Compressed { text: text.trim().to_string(), word_count: total, fallback: false });
    }
    let mut out: Vec<String> = Vec::new();
    let mut count = 0;
    let mut first_skipped = None;
    for s in sentences(text) {
        let n = word_count(&s);
        if count + n <= MAX_WORDS {
            count += n;
            out.push(s);
        } else if first_skipped.is_none() {
            first_skipped = Some(s);
        }
    }
    if count < MIN_WORDS {
        if let Some(s) = first_skipped {
            let mut clause = String::new();
            for piece in s.split_inclusive([',', ';']) {
                let candidate = format!("{clause}{piece}");
                if count + word_count(&candidate) > MAX_WORDS {
                    break;
                }
                clause = candidate;
            }
            if !clause.trim().is_empty() {
                count += word_count(&clause);
                out.push(terminated(&clause));
            }
        }
    }
    for p in pad {
        if count >= MIN_WORDS {
            break;
        }
        let p = terminated(p);
        let n = word_count(&p);
        if count + n <= MAX_WORDS && !out.contains(&p) && !mentions_any(&p, forbidden) {
            count += n;
            out.push(p);
        }
    }
    let fillers: Vec<&str> = FILLER_SENTENCES.iter().copied().filter(|f| !mentions_any(f, forbidden)).collect();
    let mut uses = vec![0usize; fillers.len()];
    while count < MIN_WORDS {
        let need = MIN_WORDS - count;
        let room = MAX_WORDS - count;
        // Prefer a filler that lands in range, else the longest that fits; least used first.
        let pick = (0..fillers.len())
            .filter(|&i| word_count(fillers[i]) <= room)
            .min_by_key(|&i| {
                let n = word_count(fillers[i]);
                (n < need, uses[i], std::cmp::Reverse(n.min(need)), n, i)
            })
            .ok_or_else(|| CorpusError::Composition("no filler fits the remaining word budget".into()))?;
        uses[pick] += 1;
        count += word_count(fillers[pick]);
        out.push(fillers[pick].to_string());
    }
    let text = out.join(" ");
    let word_count = word_count(&text);
    debug_assert_eq!(word_count, count);
    Ok(Compressed { text, word_count, fallback: false })
}

/// Asks the backend to compress and accepts its answer only if it lands in
/// the word range without naming a forbidden component; otherwise falls
/// back to [`compress_extractive`].
pub fn compress(text: &str, pad: &[String], forbidden: &[&str], backend: &dyn TextBackend) -> Result<Compressed> {
    let total = word_count(text);
    if total < TOO_SHORT_WORDS {
        return Err(CorpusError::TooShort(total));
    }
    if (MIN_WORDS..=MAX_WORDS).contains(&total) {
        return Ok(Compressed { text: text.trim().to_string(), word_count: total, fallback: false });
    }
    let request = BackendRequest { task: Task::Compress, prompt: text, image: None, question: None };
    match backend.complete(&request) {
        Ok(reply) => {
            let n = word_count(&reply);
            if (MIN_WORDS..=MAX_WORDS).contains(&n) && !mentions_any(&reply, forbidden) {
                return Ok(Compressed { text: reply.trim().to_string(), word_count: n, fallback: false });
            }
            log::debug!("compression reply rejected ({n} words); using extractive fallback");
        }
        Err(e) => log::warn!("compression backend failed, using extractive fallback: {e}"),
    }
    let mut c = compress_extractive(text, pad, forbidden)?;
    c.fallback = true;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::backend::StubTextBackend;
    use crate::corpus::qa::Parsed;

    fn answer(kind: QuestionKind, component: Option<&str>, raw: &str, parsed: Parsed) -> QAAnswer {
        QAAnswer { kind, category: "chair".into(), component: component.map(Into::into), raw_text: raw.into(), parsed, parse_error: false }
    }

    fn worked_answers() -> Vec<QAAnswer> {
        vec![
            answer(QuestionKind::Category, None, "This is a brown office chair.", Parsed::Sentence("This is a brown office chair.".into())),
            answer(QuestionKind::Existence, Some("leg"), "yes", Parsed::Bool(true)),
            answer(QuestionKind::Quantity, Some("leg"), "The chair has four legs.", Parsed::Count(Count::Known(4))),
            answer(QuestionKind::Existence, Some("seat"), "yes", Parsed::Bool(true)),
            answer(
                QuestionKind::Appearance,
                Some("seat"),
                "The seat of this chair has a rectangular appearance",
                Parsed::Sentence("The seat of this chair has a rectangular appearance".into()),
            ),
        ]
    }

    #[test]
    fn worked_example_composes_in_taxonomy_order() {
        let text = compose_description("chair", &worked_answers(), &ComponentTaxonomy::default()).unwrap();
        assert_eq!(text, "This is a brown office chair. The seat of this chair has a rectangular appearance. The chair has four legs.");
    }

    #[test]
    fn absent_components_are_filtered() {
        let mut answers = worked_answers();
        answers[1] = answer(QuestionKind::Existence, Some("leg"), "no", Parsed::Bool(false));
        answers[0].raw_text = "This is an office chair. It stands on legs.".into();
        let text = compose_description("chair", &answers, &ComponentTaxonomy::default()).unwrap();
        assert!(!mentions(&text, "leg"), "{text}");
        assert!(text.starts_with("This is an office chair."));
    }

    #[test]
    fn category_answer_count_is_checked() {
        let t = ComponentTaxonomy::default();
        assert!(matches!(compose_description("chair", &worked_answers()[1..], &t), Err(CorpusError::Composition(_))));
        let mut twice = worked_answers();
        twice.push(twice[0].clone());
        assert!(matches!(compose_description("chair", &twice, &t), Err(CorpusError::Composition(_))));
    }

    #[test]
    fn fillers_cover_lengths_and_avoid_components() {
        let t = ComponentTaxonomy::default();
        for n in 2..=9 {
            assert_eq!(FILLER_SENTENCES.iter().filter(|f| word_count(f) == n).count(), 2, "length {n}");
        }
        for f in FILLER_SENTENCES {
            for c in t.all_components() {
                assert!(!mentions(f, c), "{f:?} names {c}");
            }
        }
    }

    fn lorem(rng: &mut impl Rng, words: usize) -> String {
        let vocab = ["wide", "narrow", "frame", "smooth", "panel", "curved", "a", "the", "with", "shape"];
        let mut s = String::new();
        let mut left = words;
        while left > 0 {
            let len = rng.random_range(1..=left.min(14));
            let sentence: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
            let mut sentence = sentence.join(" ");
            if len > 4 && rng.random_bool(0.5) {
                sentence = sentence.replacen(' ', ", ", 1);
            }
            s.push_str(&sentence);
            s.push_str(". ");
            left -= len;
        }
        s
    }

    #[test]
    fn examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let long = lorem(&mut rng, 200);
        assert_eq!(word_count(&long), 200);
        let c = compress(&long, &[], &[], &StubTextBackend).unwrap();
        assert!((MIN_WORDS..=MAX_WORDS).contains(&c.word_count));
        let mid = lorem(&mut rng, 54);
        assert_eq!(compress(&mid, &[], &[], &StubTextBackend).unwrap().text, mid.trim());
        assert_eq!(compress("only eight words in this short text here", &[], &[], &StubTextBackend), Err(CorpusError::TooShort(8)));
    }

    proptest! {
        #[test]
        fn compression_lands_in_range(seed in any::<u64>(), words in 10usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let text = lorem(&mut rng, words);
            let c = compress_extractive(&text, &[], &["leg"]).unwrap();
            prop_assert!((MIN_WORDS..=MAX_WORDS).contains(&c.word_count), "{} words: {}", c.word_count, c.text);
            prop_assert_eq!(c.word_count, word_count(&c.text));
            prop_assert!(!mentions(&c.text, "leg"));
        }
    }
}
