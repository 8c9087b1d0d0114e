//! Distribution transforms applied at each decoding step.

use crate::lm::{logsumexp, rank_order, TokenDistribution, TokenId, LOGPROB_FLOOR};

use super::DecodeError;

/// Tokens surviving a filter and the distribution renormalized over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    /// Ascending token ids.
    pub kept: Vec<TokenId>,
    pub dist: TokenDistribution,
}

impl Filtered {
    pub fn size(&self) -> usize {
        self.kept.len()
    }

    /// Inverse-CDF draw over `kept` in ascending id order for `u ∈ [0, 1)`.
    pub fn sample(&self, u: f64) -> TokenId {
        let mut cum = 0.0;
        for &tok in &self.kept {
            cum += self.dist.prob(tok);
            if u < cum {
                return tok;
            }
        }
        *self.kept.last().expect("filters never return an empty set")
    }
}

fn restrict(dist: &TokenDistribution, mut kept: Vec<TokenId>) -> Filtered {
    kept.sort_unstable();
    if kept.len() == dist.support().len() {
        return Filtered { kept, dist: dist.clone() };
    }
    let lp = dist.logprobs();
    let kept_lp: Vec<f64> = kept.iter().map(|&t| lp[t as usize]).collect();
    let norm = logsumexp(&kept_lp);
    let mut out = vec![f64::NEG_INFINITY; lp.len()];
    for (&t, &l) in kept.iter().zip(&kept_lp) {
        out[t as usize] = l - norm;
    }
    let dist = TokenDistribution::from_scores(out).expect("kept set carries positive mass");
    Filtered { kept, dist }
}

/// Smallest set of highest-probability tokens whose cumulative probability
/// reaches `p`; the token that crosses the threshold is kept. `p = 0` gives
/// the argmax alone and `p = 1` the whole support.
pub fn nucleus_filter(dist: &TokenDistribution, p: f64) -> Result<Filtered, DecodeError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DecodeError::InvalidP(p));
    }
    let mut ids = dist.support();
    if p >= 1.0 {
        return Ok(restrict(dist, ids));
    }
    let lp = dist.logprobs();
    let cmp = |a: &TokenId, b: &TokenId| rank_order(lp, *a, *b);
    let n = ids.len();
    let mut sorted = 0;
    let mut chunk = 64;
    let mut cum = 0.0;
    // Select and sort the head in growing chunks instead of sorting all of V.
    while sorted < n {
        let end = (sorted + chunk).min(n);
        if end < n {
            ids[sorted..].select_nth_unstable_by(end - sorted - 1, cmp);
        }
        ids[sorted..end].sort_unstable_by(cmp);
        for i in sorted..end {
            cum += lp[ids[i] as usize].exp();
            if cum >= p {
                ids.truncate(i + 1);
                return Ok(restrict(dist, ids));
            }
        }
        sorted = end;
        chunk *= 2;
    }
    Ok(restrict(dist, ids))
}

/// The `k` most probable tokens (ties by ascending id), never including
/// zero-probability tokens.
pub fn top_k_filter(dist: &TokenDistribution, k: usize) -> Result<Filtered, DecodeError> {
    if k == 0 || k > dist.len() {
        return Err(DecodeError::InvalidK { k, vocab_size: dist.len() });
    }
    let mut ids = dist.support();
    if k < ids.len() {
        let lp = dist.logprobs();
        ids.select_nth_unstable_by(k - 1, |a, b| rank_order(lp, *a, *b));
        ids.truncate(k);
    }
    Ok(restrict(dist, ids))
}

/// Scales log-probabilities by `1/T` and renormalizes; `T = 1` is the identity.
pub fn apply_temperature(dist: &TokenDistribution, temperature: f64) -> Result<TokenDistribution, DecodeError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(DecodeError::InvalidTemperature(temperature));
    }
    if temperature == 1.0 {
        return Ok(dist.clone());
    }
    let scores = dist.logprobs().iter().map(|&x| x / temperature).collect();
    Ok(TokenDistribution::from_scores(scores)?)
}

/// Anti-LM adjustment: `log p(t | S) − λ·log p(t)` per token, with the
/// unconditional term floored at [`LOGPROB_FLOOR`], then renormalized.
pub fn mmi_adjust(
    cond: &TokenDistribution,
    uncond: &TokenDistribution,
    lambda: f64,
) -> Result<TokenDistribution, DecodeError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(DecodeError::InvalidLambda(lambda));
    }
    if cond.len() != uncond.len() {
        return Err(DecodeError::VocabMismatch {
            cond: cond.len(),
            uncond: uncond.len(),
        });
    }
    if lambda == 0.0 {
        return Ok(cond.clone());
    }
    let scores = cond
        .logprobs()
        .iter()
        .zip(uncond.logprobs())
        .map(|(&c, &u)| c - lambda * u.max(LOGPROB_FLOOR))
        .collect();
    Ok(TokenDistribution::from_scores(scores)?)
}

/// Applies the anti-LM term only to tokens that already survived a filter.
pub fn mmi_adjust_within(
    filtered: &Filtered,
    uncond: &TokenDistribution,
    lambda: f64,
) -> Result<Filtered, DecodeError> {
    let dist = mmi_adjust(&filtered.dist, uncond, lambda)?;
    Ok(Filtered {
        kept: filtered.kept.clone(),
        dist,
    })
}
