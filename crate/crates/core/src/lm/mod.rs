//! Language-model interface and the desk-scale models behind it.

mod dist;
mod eval;
mod ngram;
mod simple;
mod vocab;

pub use dist::{logsumexp, rank_order, TokenDistribution, LOGPROB_FLOOR, NORMALIZATION_TOLERANCE};
pub use eval::{perplexity, sequence_logprob, PerplexityScope};
pub use ngram::{train_ngram, train_ngram_texts, NGramLM, NGRAM_FORMAT};
pub use simple::{TableModel, UniformModel};
pub use vocab::{SpecialTokens, Vocab, UNK};

use crate::bridge::BridgeError;

pub type TokenId = u32;

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("token id {id} is outside the vocabulary of {vocab_size}")]
    OutOfVocab { id: TokenId, vocab_size: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("target sequence is empty")]
    EmptyTarget,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("unsupported model file: {0}")]
    UnsupportedFormat(String),
    #[error("model bridge unavailable: {0}")]
    BridgeUnavailable(#[from] BridgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Maps a context to its next-token distribution. Implementations are
/// immutable once built and deterministic for a fixed context.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError>;

    /// Like [`LanguageModel::next_distribution`], but the caller only needs
    /// the highest-probability tokens covering `min_mass` to be exact.
    /// Remote models use this to fetch a truncated vector.
    fn next_distribution_covering(
        &self,
        context: &[TokenId],
        _min_mass: f64,
    ) -> Result<TokenDistribution, LmError> {
        self.next_distribution(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        (**self).next_distribution(context)
    }
    fn next_distribution_covering(&self, context: &[TokenId], min_mass: f64) -> Result<TokenDistribution, LmError> {
        (**self).next_distribution_covering(context, min_mass)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        (**self).next_distribution(context)
    }
    fn next_distribution_covering(&self, context: &[TokenId], min_mass: f64) -> Result<TokenDistribution, LmError> {
        (**self).next_distribution_covering(context, min_mass)
    }
}

/// Text <-> token-id conversion paired with a model.
pub trait Codec: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, LmError>;
    fn decode(&self, ids: &[TokenId]) -> Result<String, LmError>;
    fn specials(&self) -> SpecialTokens;
}

pub(crate) fn check_context(context: &[TokenId], vocab_size: usize) -> Result<(), LmError> {
    match context.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(LmError::OutOfVocab { id, vocab_size }),
        None => Ok(()),
    }
}
