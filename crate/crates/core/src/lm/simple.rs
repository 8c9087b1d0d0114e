use std::collections::HashMap;

use super::{check_context, LanguageModel, LmError, TokenDistribution, TokenId};

/// Every token equally likely regardless of context.
#[derive(Debug, Clone)]
pub struct UniformModel {
    size: usize,
}

impl UniformModel {
    pub fn new(size: usize) -> Self {
        assert!(size >= 2, "vocabulary needs at least two tokens");
        Self { size }
    }
}

impl LanguageModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.size
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        check_context(context, self.size)?;
        Ok(TokenDistribution::uniform(self.size))
    }
}

/// Lookup table keyed on the last context token. Contexts without a rule
/// (including the empty context) fall back to uniform.
#[derive(Debug, Clone)]
pub struct TableModel {
    size: usize,
    rules: HashMap<TokenId, TokenDistribution>,
}

impl TableModel {
    pub fn new(size: usize) -> Self {
        assert!(size >= 2, "vocabulary needs at least two tokens");
        Self { size, rules: HashMap::new() }
    }

    /// After `last`, emit tokens with the given probabilities (renormalized);
    /// everything else gets probability zero.
    pub fn with_rule(mut self, last: TokenId, next: &[(TokenId, f64)]) -> Self {
        let mut scores = vec![f64::NEG_INFINITY; self.size];
        for &(tok, p) in next {
            scores[tok as usize] = p.ln();
        }
        let dist = TokenDistribution::from_scores(scores).expect("rule needs positive mass");
        self.rules.insert(last, dist);
        self
    }

    /// Deterministic chain: each token of `sequence` is followed by the next
    /// one with probability 1.
    pub fn forced(size: usize, sequence: &[TokenId]) -> Self {
        sequence
            .windows(2)
            .fold(Self::new(size), |m, w| m.with_rule(w[0], &[(w[1], 1.0)]))
    }
}

impl LanguageModel for TableModel {
    fn vocab_size(&self) -> usize {
        self.size
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        check_context(context, self.size)?;
        Ok(context
            .last()
            .and_then(|t| self.rules.get(t))
            .cloned()
            .unwrap_or_else(|| TokenDistribution::uniform(self.size)))
    }
}
