use super::{EncoderError, Result};

/// Token budget of the text embedder.
pub const MAX_PROMPT_TOKENS: usize = 77;

/// Counts tokens the way a particular text embedder would.
pub trait TokenCounter {
    fn count_tokens(&self, text: &str) -> Result<usize>;
}

/// Splits on whitespace; every punctuation character is its own token and
/// every maximal alphanumeric run is one token.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubTokenizer;

impl StubTokenizer {
    /// Byte spans of each token.
    pub fn spans(text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                word_start.get_or_insert(i);
                continue;
            }
            if let Some(s) = word_start.take() {
                spans.push((s, i));
            }
            if !ch.is_whitespace() {
                spans.push((i, i + ch.len_utf8()));
            }
        }
        if let Some(s) = word_start {
            spans.push((s, text.len()));
        }
        spans
    }
}

impl TokenCounter for StubTokenizer {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(Self::spans(text).len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPrompt {
    pub category: String,
    pub rich_description: Option<String>,
    pub rendered: String,
    pub token_count: usize,
}

fn template(category: &str) -> String {
    format!("This is a {category}")
}

/// `"This is a {category}"`, optionally followed by `". "` and a description,
/// truncated to [`MAX_PROMPT_TOKENS`] using the stub tokenizer.
pub fn build_prompt(category: &str, rich_description: Option<&str>) -> Result<TextPrompt> {
    build_prompt_with(category, rich_description, &StubTokenizer)
}

/// As [`build_prompt`] but with the embedder's own token counter. Only
/// trailing tokens of the description are dropped; the template is kept whole.
pub fn build_prompt_with(category: &str, rich_description: Option<&str>, counter: &dyn TokenCounter) -> Result<TextPrompt> {
    let category = category.trim();
    if category.is_empty() {
        return Err(EncoderError::InvalidArgument("category must be non-empty".into()));
    }
    let head = template(category);
    let head_count = counter.count_tokens(&head)?;
    if head_count > MAX_PROMPT_TOKENS {
        return Err(EncoderError::InvalidArgument(format!(
            "category template alone has {head_count} tokens"
        )));
    }
    let description = rich_description.map(str::trim).filter(|d| !d.is_empty());
    let Some(desc) = description else {
        return Ok(TextPrompt { category: category.into(), rich_description: None, rendered: head, token_count: head_count });
    };

    // Candidate cut points are the ends of the description's stub tokens;
    // the counter decides how many fit.
    let spans = StubTokenizer::spans(desc);
    let render = |k: usize| -> String {
        if k == 0 {
            head.clone()
        } else {
            format!("{head}. {}", &desc[..spans[k - 1].1])
        }
    };
    let full = render(spans.len());
    let full_count = counter.count_tokens(&full)?;
    let (rendered, token_count) = if full_count <= MAX_PROMPT_TOKENS {
        (full, full_count)
    } else {
        let (mut lo, mut hi) = (0usize, spans.len());
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if counter.count_tokens(&render(mid))? <= MAX_PROMPT_TOKENS {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let text = render(lo);
        let count = counter.count_tokens(&text)?;
        (text, count)
    };
    Ok(TextPrompt {
        category: category.into(),
        rich_description: Some(desc.to_string()),
        rendered,
        token_count,
    })
}

/// A user-written prompt, cut after its last stub token that fits the budget.
/// `category` is recorded but not inserted.
pub fn free_prompt(category: &str, text: &str) -> Result<TextPrompt> {
    let text = text.trim();
    if text.is_empty() {
        return Err(EncoderError::InvalidArgument("prompt must be non-empty".into()));
    }
    let spans = StubTokenizer::spans(text);
    let keep = spans.len().min(MAX_PROMPT_TOKENS);
    let rendered = text[..spans[keep - 1].1].to_string();
    Ok(TextPrompt { category: category.into(), rich_description: None, rendered, token_count: keep })
}
