//! WritingPrompts ingestion: tag filtering, length classes and the combined
//! `<|startoftext|> [WP] prompt [RESPONSE] response <|endoftext|>` format.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tokenizer::{Tokenizer, TokenizerError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{0} is empty")]
    EmptyField(&'static str),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("text is not in the combined example format: {0}")]
    Malformed(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("source and target files differ in length ({source_lines} vs {target_lines} lines)")]
    PairedLengthMismatch {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("unknown length class {0:?}")]
    UnknownClass(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub tag: String,
    pub prompt: String,
    pub response: String,
}

impl RawPair {
    pub fn new(tag: impl Into<String>, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            prompt: prompt.into(),
            response: response.into(),
        }
    }

    pub fn is_wp(&self) -> bool {
        normalize_tag(&self.tag) == "WP"
    }
}

/// `"[ wp ]"` -> `"WP"`.
pub fn normalize_tag(tag: &str) -> String {
    tag.chars()
        .filter(|c| !c.is_whitespace() && *c != '[' && *c != ']')
        .flat_map(char::to_uppercase)
        .collect()
}

/// Keeps only unconstrained `[ WP ]` prompts, in input order.
pub fn filter_wp<I: IntoIterator<Item = RawPair>>(pairs: I) -> Vec<RawPair> {
    pairs.into_iter().filter(RawPair::is_wp).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthClass {
    Small,
    Medium,
    Large,
}

impl LengthClass {
    pub const ALL: [LengthClass; 3] = [Self::Small, Self::Medium, Self::Large];

    /// Number of line breaks before which the response is cut; `None` keeps
    /// the whole response.
    pub fn break_count(self) -> Option<usize> {
        match self {
            Self::Small => Some(1),
            Self::Medium => Some(3),
            Self::Large => None,
        }
    }

    pub fn token_cap(self) -> usize {
        match self {
            Self::Small => 100,
            Self::Medium => 256,
            Self::Large => 1024,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

impl fmt::Display for LengthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LengthClass {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "large" => Ok(Self::Large),
            _ => Err(CorpusError::UnknownClass(s.to_string())),
        }
    }
}

/// Text before the `breaks`-th line break. A run of consecutive newlines
/// (optionally with carriage returns) counts as one break.
pub fn cut_at_breaks(text: &str, breaks: usize) -> &str {
    let bytes = text.as_bytes();
    let mut seen = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' || bytes[i] == b'\r' {
            seen += 1;
            if seen == breaks {
                return text[..i].trim_end();
            }
            while i < bytes.len() && (bytes[i] == b'\n' || bytes[i] == b'\r') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    text
}

/// Cuts at the class's line break first, then applies the token cap.
pub fn truncate_response(
    response: &str,
    class: LengthClass,
    tokenizer: &dyn Tokenizer,
) -> Result<String, TokenizerError> {
    let response = response.trim();
    let blocks = match class.break_count() {
        Some(n) => cut_at_breaks(response, n),
        None => response,
    };
    tokenizer.truncate(blocks, class.token_cap())
}

/// Marker strings of the combined training format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleFormat {
    pub start: String,
    pub prompt_marker: String,
    pub response_marker: String,
    pub end: String,
}

impl Default for ExampleFormat {
    fn default() -> Self {
        Self {
            start: "<|startoftext|>".into(),
            prompt_marker: "[WP]".into(),
            response_marker: "[RESPONSE]".into(),
            end: "<|endoftext|>".into(),
        }
    }
}

impl ExampleFormat {
    pub fn format(&self, prompt: &str, response: &str) -> Result<String, CorpusError> {
        if prompt.trim().is_empty() {
            return Err(CorpusError::EmptyField("prompt"));
        }
        if response.trim().is_empty() {
            return Err(CorpusError::EmptyField("response"));
        }
        Ok(format!(
            "{} {} {} {} {} {}",
            self.start, self.prompt_marker, prompt, self.response_marker, response, self.end
        ))
    }

    /// Inverse of [`ExampleFormat::format`] for pairs that do not contain the
    /// marker strings themselves.
    pub fn parse(&self, text: &str) -> Result<(String, String), CorpusError> {
        let head = format!("{} {} ", self.start, self.prompt_marker);
        let tail = format!(" {}", self.end);
        let sep = format!(" {} ", self.response_marker);
        let body = text
            .strip_prefix(head.as_str())
            .and_then(|t| t.strip_suffix(tail.as_str()))
            .ok_or_else(|| CorpusError::Malformed(preview(text)))?;
        let (prompt, response) = body
            .split_once(sep.as_str())
            .ok_or_else(|| CorpusError::Malformed(preview(text)))?;
        Ok((prompt.to_string(), response.to_string()))
    }
}

fn preview(text: &str) -> String {
    text.chars().take(60).collect()
}

pub fn format_example(prompt: &str, response: &str) -> Result<String, CorpusError> {
    ExampleFormat::default().format(prompt, response)
}

pub fn parse_example(text: &str) -> Result<(String, String), CorpusError> {
    ExampleFormat::default().parse(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedExample {
    pub text: String,
    pub length_class: LengthClass,
    pub prompt_token_count: usize,
    pub response_token_count: usize,
}

impl ProcessedExample {
    pub fn token_count(&self) -> usize {
        self.prompt_token_count + self.response_token_count
    }
}

pub fn process_pair(
    pair: &RawPair,
    class: LengthClass,
    tokenizer: &dyn Tokenizer,
    format: &ExampleFormat,
) -> Result<ProcessedExample, CorpusError> {
    let prompt = pair.prompt.trim();
    let response = truncate_response(&pair.response, class, tokenizer)?;
    let text = format.format(prompt, &response)?;
    Ok(ProcessedExample {
        text,
        length_class: class,
        prompt_token_count: tokenizer.count(prompt)?,
        response_token_count: tokenizer.count(&response)?,
    })
}

/// Filter, truncate and format a batch. Pairs that end up with an empty
/// prompt or response are dropped.
pub fn preprocess(
    pairs: Vec<RawPair>,
    class: LengthClass,
    tokenizer: &dyn Tokenizer,
    format: &ExampleFormat,
) -> Result<Vec<ProcessedExample>, CorpusError> {
    let mut out = Vec::new();
    for pair in filter_wp(pairs) {
        match process_pair(&pair, class, tokenizer, format) {
            Ok(ex) => out.push(ex),
            Err(CorpusError::EmptyField(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub example_count: usize,
    pub mean_tokens_per_example: f64,
    /// Population standard deviation.
    pub std_tokens_per_example: f64,
    pub total_tokens: usize,
}

pub fn corpus_stats(examples: &[ProcessedExample]) -> Result<CorpusStats, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let counts: Vec<usize> = examples.iter().map(ProcessedExample::token_count).collect();
    let total: usize = counts.iter().sum();
    let n = counts.len() as f64;
    let mean = total as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok(CorpusStats {
        example_count: counts.len(),
        mean_tokens_per_example: mean,
        std_tokens_per_example: var.sqrt(),
        total_tokens: total,
    })
}

/// One [`RawPair`] JSON object per line; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawPair>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        out.push(pair);
    }
    Ok(out)
}

/// Splits a leading `[ XX ]` tag off a source line.
pub fn split_tag(line: &str) -> (&str, &str) {
    let trimmed = line.trim_start();
    if trimmed.starts_with('[') {
        if let Some(end) = trimmed.find(']') {
            return (&trimmed[..=end], trimmed[end + 1..].trim());
        }
    }
    ("", trimmed.trim())
}

/// The original dataset layout: `*.wp_source` holds `[ WP ] prompt` lines and
/// `*.wp_target` the matching responses with `<newline>` standing in for line
/// breaks.
pub fn read_paired<S: BufRead, T: BufRead>(source: S, target: T) -> Result<Vec<RawPair>, CorpusError> {
    let sources: Vec<String> = source.lines().collect::<Result<_, _>>()?;
    let targets: Vec<String> = target.lines().collect::<Result<_, _>>()?;
    if sources.len() != targets.len() {
        return Err(CorpusError::PairedLengthMismatch {
            source_lines: sources.len(),
            target_lines: targets.len(),
        });
    }
    Ok(sources
        .iter()
        .zip(&targets)
        .map(|(s, t)| {
            let (tag, prompt) = split_tag(s);
            let response = t
                .split("<newline>")
                .map(str::trim)
                .collect::<Vec<_>>()
                .join("\n");
            RawPair::new(tag, prompt, response.trim())
        })
        .collect())
}
