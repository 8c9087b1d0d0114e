use serde::{Deserialize, Serialize};

use super::filter::{apply_temperature, mmi_adjust, mmi_adjust_within, nucleus_filter, top_k_filter, Filtered};
use super::{DecodeError, DecoderConfig, MmiPlacement, SampleRng, Strategy};
use crate::lm::{Codec, LanguageModel, TokenDistribution, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step_index: usize,
    pub chosen_token: TokenId,
    /// Tokens left after filtering at this step.
    pub sampled_space_size: usize,
    /// Log-probability of the chosen token under the conditional model,
    /// before any adjustment or filtering.
    pub chosen_logprob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndToken,
    MaxTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub schema_version: u32,
    pub prompt: String,
    /// Decoded response, without the end marker.
    pub response: String,
    pub config: DecoderConfig,
    /// One entry per generated token, the end marker included.
    pub steps: Vec<StepTrace>,
    pub terminated_by: Termination,
}

impl GenerationRecord {
    /// Generated token ids, without the end marker.
    pub fn response_tokens(&self) -> Vec<TokenId> {
        let n = match self.terminated_by {
            Termination::EndToken => self.steps.len().saturating_sub(1),
            Termination::MaxTokens => self.steps.len(),
        };
        self.steps[..n].iter().map(|s| s.chosen_token).collect()
    }

    pub fn sampled_space_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.sampled_space_size)
    }
}

fn strategy_filter(dist: &TokenDistribution, config: &DecoderConfig) -> Result<Filtered, DecodeError> {
    match config.strategy {
        Strategy::Greedy => top_k_filter(dist, 1),
        Strategy::TopK => top_k_filter(dist, config.k),
        Strategy::Nucleus => nucleus_filter(dist, config.p),
        Strategy::Random => nucleus_filter(dist, 1.0),
    }
}

/// One decoding step without the draw: anti-LM adjustment (when `uncond` is
/// given), temperature, then the strategy filter. With
/// [`MmiPlacement::AfterFilter`] the adjustment moves after the filter.
pub fn step_filter(
    cond: &TokenDistribution,
    uncond: Option<&TokenDistribution>,
    config: &DecoderConfig,
) -> Result<Filtered, DecodeError> {
    let filtered = match (uncond, config.mmi_placement) {
        (Some(u), MmiPlacement::BeforeFilter) => {
            let adjusted = mmi_adjust(cond, u, config.lambda)?;
            strategy_filter(&apply_temperature(&adjusted, config.temperature)?, config)?
        }
        (Some(u), MmiPlacement::AfterFilter) => {
            let f = strategy_filter(&apply_temperature(cond, config.temperature)?, config)?;
            mmi_adjust_within(&f, u, config.lambda)?
        }
        (None, _) => strategy_filter(&apply_temperature(cond, config.temperature)?, config)?,
    };
    if filtered.kept.is_empty() {
        return Err(DecodeError::DegenerateDistribution);
    }
    Ok(filtered)
}

/// Generates a response to `prompt` with an RNG seeded from `config.seed`.
///
/// `uncond` scores the prompt-free prefix for the anti-LM term; pass the
/// conditional model again to use the same network for both.
pub fn generate<C, U, K>(cond: &C, uncond: &U, codec: &K, prompt: &str, config: &DecoderConfig) -> Result<GenerationRecord, DecodeError>
where
    C: LanguageModel + ?Sized,
    U: LanguageModel + ?Sized,
    K: Codec + ?Sized,
{
    let mut rng = SampleRng::new(config.seed);
    generate_with_rng(cond, uncond, codec, prompt, config, &mut rng)
}

pub fn generate_with_rng<C, U, K>(
    cond: &C,
    uncond: &U,
    codec: &K,
    prompt: &str,
    config: &DecoderConfig,
    rng: &mut SampleRng,
) -> Result<GenerationRecord, DecodeError>
where
    C: LanguageModel + ?Sized,
    U: LanguageModel + ?Sized,
    K: Codec + ?Sized,
{
    config.validate()?;
    if prompt.trim().is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    if config.lambda > 0.0 && cond.vocab_size() != uncond.vocab_size() {
        return Err(DecodeError::VocabMismatch {
            cond: cond.vocab_size(),
            uncond: uncond.vocab_size(),
        });
    }
    let sp = codec.specials();
    let mut cond_ctx = vec![sp.start, sp.prompt];
    cond_ctx.extend(codec.encode(prompt)?);
    cond_ctx.push(sp.response);
    let mut uncond_ctx = vec![sp.start, sp.response];

    let mut steps = Vec::new();
    let mut generated = Vec::new();
    let mut terminated_by = Termination::MaxTokens;
    for step_index in 0..config.max_tokens {
        let mmi = config.mmi_active(step_index);
        let dist = match config.strategy {
            Strategy::Nucleus | Strategy::Random if !mmi && config.temperature == 1.0 => {
                let mass = if config.strategy == Strategy::Random { 1.0 } else { config.p };
                cond.next_distribution_covering(&cond_ctx, mass)?
            }
            _ => cond.next_distribution(&cond_ctx)?,
        };
        let u_dist = if mmi { Some(uncond.next_distribution(&uncond_ctx)?) } else { None };
        let filtered = step_filter(&dist, u_dist.as_ref(), config)?;
        let token = filtered.sample(rng.next_unit());
        steps.push(StepTrace {
            step_index,
            chosen_token: token,
            sampled_space_size: filtered.size(),
            chosen_logprob: dist.logprob(token),
        });
        if token == sp.end {
            terminated_by = Termination::EndToken;
            break;
        }
        generated.push(token);
        cond_ctx.push(token);
        if step_index + 1 < config.mmi_window && config.lambda > 0.0 {
            uncond_ctx.push(token);
        }
    }
    Ok(GenerationRecord {
        schema_version: crate::SCHEMA_VERSION,
        prompt: prompt.to_string(),
        response: codec.decode(&generated)?,
        config: config.clone(),
        steps,
        terminated_by,
    })
}
