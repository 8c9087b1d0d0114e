//! Add-α smoothed n-gram model, the default desk-scale generator.
//!
//! Probabilities come from the longest suffix of the (start-padded) context
//! that occurred in training:
//!
//! ```text
//! P(w | h) = (c(h, w) + α) / (c(h) + α·|V|)
//! ```
//!
//! Contexts never seen at the full order back off to shorter suffixes, down
//! to the smoothed unigram table, so every context gets a proper distribution.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{check_context, Codec, LanguageModel, LmError, SpecialTokens, TokenDistribution, TokenId, Vocab};
use crate::corpus::{ExampleFormat, ProcessedExample};

/// Identifier written into serialized model files.
pub const NGRAM_FORMAT: &str = "narrative-ngram";

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    next: Vec<(TokenId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    order: usize,
    alpha: f64,
    vocab: Vocab,
    /// `tables[k]` maps length-`k` contexts to continuation counts.
    tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
}

pub fn train_ngram(examples: &[ProcessedExample], order: usize, alpha: f64) -> Result<NGramLM, LmError> {
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    train_ngram_texts(&texts, order, alpha, &ExampleFormat::default())
}

pub fn train_ngram_texts(
    texts: &[&str],
    order: usize,
    alpha: f64,
    format: &ExampleFormat,
) -> Result<NGramLM, LmError> {
    if order == 0 {
        return Err(LmError::InvalidOrder);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(LmError::InvalidAlpha(alpha));
    }
    if texts.iter().all(|t| t.split_whitespace().next().is_none()) {
        return Err(LmError::EmptyCorpus);
    }
    let vocab = Vocab::build(texts.iter().copied(), format);
    let pad = vocab.specials().start;
    let mut raw: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u32>>> = vec![HashMap::new(); order];
    for text in texts {
        let mut ids = vec![pad; order - 1];
        ids.extend(vocab.encode_lossy(text));
        for i in order - 1..ids.len() {
            for (k, table) in raw.iter_mut().enumerate() {
                let ctx = ids[i - k..i].to_vec();
                *table.entry(ctx).or_default().entry(ids[i]).or_insert(0) += 1;
            }
        }
    }
    let tables = raw
        .into_iter()
        .map(|table| {
            table
                .into_iter()
                .map(|(ctx, next)| {
                    let mut next: Vec<_> = next.into_iter().collect();
                    next.sort_unstable();
                    let total = next.iter().map(|&(_, c)| c as u64).sum();
                    (ctx, ContextCounts { total, next })
                })
                .collect()
        })
        .collect();
    Ok(NGramLM { order, alpha, vocab, tables })
}

impl NGramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Raw count of `next` after exactly `context` (no padding, no backoff).
    pub fn count(&self, context: &[TokenId], next: TokenId) -> u32 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .and_then(|c| c.next.binary_search_by_key(&next, |&(t, _)| t).ok().map(|i| c.next[i].1))
            .unwrap_or(0)
    }

    fn lookup(&self, context: &[TokenId]) -> &ContextCounts {
        let want = self.order - 1;
        let pad = self.vocab.specials().start;
        let mut padded = vec![pad; want.saturating_sub(context.len())];
        padded.extend_from_slice(&context[context.len().saturating_sub(want)..]);
        for k in (1..=want).rev() {
            if let Some(c) = self.tables[k].get(&padded[want - k..]) {
                return c;
            }
        }
        &self.tables[0][&[][..]]
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), LmError> {
        let mut entries = Vec::new();
        for table in &self.tables {
            let mut keys: Vec<&Vec<TokenId>> = table.keys().collect();
            keys.sort();
            for ctx in keys {
                entries.push(CountEntry {
                    context: ctx.clone(),
                    next: table[ctx].next.clone(),
                });
            }
        }
        let file = ModelFile {
            format: NGRAM_FORMAT.to_string(),
            schema_version: crate::SCHEMA_VERSION,
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.tokens().to_vec(),
            counts: entries,
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, LmError> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        if file.format != NGRAM_FORMAT {
            return Err(LmError::UnsupportedFormat(format!("format {:?}", file.format)));
        }
        if file.schema_version != crate::SCHEMA_VERSION {
            return Err(LmError::UnsupportedFormat(format!("schema_version {}", file.schema_version)));
        }
        if file.order == 0 {
            return Err(LmError::InvalidOrder);
        }
        if !(file.alpha > 0.0 && file.alpha.is_finite()) {
            return Err(LmError::InvalidAlpha(file.alpha));
        }
        let vocab = Vocab::from_tokens(file.vocab)?;
        let mut tables = vec![HashMap::new(); file.order];
        for e in file.counts {
            let k = e.context.len();
            if k >= file.order {
                return Err(LmError::UnsupportedFormat(format!("context of length {k} in order-{} model", file.order)));
            }
            check_context(&e.context, vocab.len())?;
            for &(tok, c) in &e.next {
                check_context(&[tok], vocab.len())?;
                if c == 0 {
                    return Err(LmError::UnsupportedFormat("zero count stored".into()));
                }
            }
            let total = e.next.iter().map(|&(_, c)| c as u64).sum();
            tables[k].insert(e.context, ContextCounts { total, next: e.next });
        }
        if !tables[0].contains_key(&Vec::new()) {
            return Err(LmError::EmptyCorpus);
        }
        Ok(Self {
            order: file.order,
            alpha: file.alpha,
            vocab,
            tables,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CountEntry {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u32)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    schema_version: u32,
    order: usize,
    alpha: f64,
    vocab: Vec<String>,
    counts: Vec<CountEntry>,
}

impl LanguageModel for NGramLM {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        check_context(context, self.vocab.len())?;
        let counts = self.lookup(context);
        let v = self.vocab.len() as f64;
        let denom = (counts.total as f64 + self.alpha * v).ln();
        let mut logprobs = vec![self.alpha.ln() - denom; self.vocab.len()];
        for &(tok, c) in &counts.next {
            logprobs[tok as usize] = (c as f64 + self.alpha).ln() - denom;
        }
        Ok(TokenDistribution::from_logprobs_unchecked(logprobs))
    }
}

impl Codec for NGramLM {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        self.vocab.encode(text)
    }

    fn decode(&self, ids: &[TokenId]) -> Result<String, LmError> {
        self.vocab.decode(ids)
    }

    fn specials(&self) -> SpecialTokens {
        self.vocab.specials()
    }
}
