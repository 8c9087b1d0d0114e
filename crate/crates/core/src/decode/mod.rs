//! Decoding strategies and the generation loop.

mod filter;
mod generate;
mod rng;

use serde::{Deserialize, Serialize};

pub use filter::{apply_temperature, mmi_adjust, mmi_adjust_within, nucleus_filter, top_k_filter, Filtered};
pub use generate::{generate, generate_with_rng, step_filter, GenerationRecord, StepTrace, Termination};
pub use rng::SampleRng;

use crate::lm::LmError;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("p must be in [0,1], got {0}")]
    InvalidP(f64),
    #[error("k must be in [1, {vocab_size}], got {k}")]
    InvalidK { k: usize, vocab_size: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("lambda must be non-negative and finite, got {0}")]
    InvalidLambda(f64),
    #[error("max_tokens must be at least 1")]
    InvalidMaxTokens,
    #[error("conditional and unconditional vocabularies differ ({cond} vs {uncond})")]
    VocabMismatch { cond: usize, uncond: usize },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("filtered token set is empty")]
    DegenerateDistribution,
    #[error(transparent)]
    Lm(#[from] LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    TopK,
    Nucleus,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "greedy" => Ok(Self::Greedy),
            "top_k" => Ok(Self::TopK),
            "nucleus" | "top_p" => Ok(Self::Nucleus),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// Where the anti-LM term enters relative to the strategy filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmiPlacement {
    /// Adjust the full distribution, then filter.
    #[default]
    BeforeFilter,
    /// Filter the model distribution, then adjust within the kept set.
    AfterFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub strategy: Strategy,
    pub p: f64,
    pub k: usize,
    pub temperature: f64,
    /// Anti-LM strength; 0 disables it.
    pub lambda: f64,
    /// Number of leading response tokens the anti-LM term applies to.
    pub mmi_window: usize,
    pub max_tokens: usize,
    pub seed: u64,
    pub mmi_placement: MmiPlacement,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Nucleus,
            p: 0.7,
            k: 40,
            temperature: 1.0,
            lambda: 0.0,
            mmi_window: 20,
            max_tokens: 256,
            seed: 0,
            mmi_placement: MmiPlacement::BeforeFilter,
        }
    }
}

impl DecoderConfig {
    pub fn greedy() -> Self {
        Self { strategy: Strategy::Greedy, ..Self::default() }
    }

    pub fn nucleus(p: f64) -> Self {
        Self { strategy: Strategy::Nucleus, p, ..Self::default() }
    }

    pub fn top_k(k: usize) -> Self {
        Self { strategy: Strategy::TopK, k, ..Self::default() }
    }

    pub fn random() -> Self {
        Self { strategy: Strategy::Random, p: 1.0, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// Checks hyperparameter ranges; `k` is checked against the vocabulary
    /// when the filter runs.
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(DecodeError::InvalidP(self.p));
        }
        if self.k == 0 {
            return Err(DecodeError::InvalidK { k: 0, vocab_size: 0 });
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::InvalidTemperature(self.temperature));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DecodeError::InvalidLambda(self.lambda));
        }
        if self.max_tokens == 0 {
            return Err(DecodeError::InvalidMaxTokens);
        }
        Ok(())
    }

    pub fn mmi_active(&self, step: usize) -> bool {
        self.lambda > 0.0 && step < self.mmi_window
    }
}
