use serde::{Deserialize, Serialize};

use super::{Codec, LanguageModel, LmError, TokenId, LOGPROB_FLOOR};
use crate::corpus::ProcessedExample;

/// Which tokens of a combined example are scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerplexityScope {
    /// Tokens after the response marker, conditioned on the prompt prefix.
    #[default]
    ResponseOnly,
    /// Every token after the leading start marker.
    FullSequence,
}

/// `Σ_i log p(target[i] | context ++ target[..i])`, each term floored at
/// [`LOGPROB_FLOOR`].
pub fn sequence_logprob(
    model: &dyn LanguageModel,
    context: &[TokenId],
    target: &[TokenId],
) -> Result<f64, LmError> {
    if target.is_empty() {
        return Err(LmError::EmptyTarget);
    }
    let mut prefix = context.to_vec();
    let mut total = 0.0;
    for &tok in target {
        let dist = model.next_distribution(&prefix)?;
        if tok as usize >= dist.len() {
            return Err(LmError::OutOfVocab { id: tok, vocab_size: dist.len() });
        }
        total += dist.logprob(tok).max(LOGPROB_FLOOR);
        prefix.push(tok);
    }
    Ok(total)
}

/// `exp(-Σ logprob / Σ scored tokens)` over a set of examples.
pub fn perplexity(
    model: &dyn LanguageModel,
    codec: &dyn Codec,
    examples: &[ProcessedExample],
    scope: PerplexityScope,
) -> Result<f64, LmError> {
    let response_marker = codec.specials().response;
    let mut total_logprob = 0.0;
    let mut scored = 0usize;
    for ex in examples {
        let ids = codec.encode(&ex.text)?;
        let split = match scope {
            PerplexityScope::ResponseOnly => match ids.iter().position(|&t| t == response_marker) {
                Some(i) => i + 1,
                None => return Err(LmError::InvalidDistribution("example has no response marker".into())),
            },
            PerplexityScope::FullSequence => 1,
        };
        if split >= ids.len() {
            continue;
        }
        total_logprob += sequence_logprob(model, &ids[..split], &ids[split..])?;
        scored += ids.len() - split;
    }
    if scored == 0 {
        return Err(LmError::EmptyCorpus);
    }
    Ok((-total_logprob / scored as f64).exp())
}
