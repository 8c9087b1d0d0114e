use serde::{Deserialize, Serialize};

use super::{LmError, TokenId};

/// Replaces -inf wherever log-probabilities enter arithmetic (MMI scores,
/// sequence scoring), so differences never turn into NaN.
pub const LOGPROB_FLOOR: f64 = -30.0;

/// Tolerance on `|logsumexp(logprobs)|` for a valid distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Orders tokens by descending log-probability, ties broken by ascending id.
pub fn rank_order(logprobs: &[f64], a: TokenId, b: TokenId) -> std::cmp::Ordering {
    logprobs[b as usize]
        .partial_cmp(&logprobs[a as usize])
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.cmp(&b))
}

/// Next-token log-probabilities (natural log) over the whole vocabulary.
///
/// Entries may be `-inf` for tokens a filter removed or a model rules out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TokenDistribution {
    logprobs: Vec<f64>,
}

impl TokenDistribution {
    /// Wraps an already-normalized vector, checking the invariants.
    pub fn from_logprobs(logprobs: Vec<f64>) -> Result<Self, LmError> {
        if logprobs.len() < 2 {
            return Err(LmError::InvalidDistribution(format!("length {} < 2", logprobs.len())));
        }
        if let Some(i) = logprobs.iter().position(|x| x.is_nan() || *x > NORMALIZATION_TOLERANCE) {
            return Err(LmError::InvalidDistribution(format!("entry {i} is {}", logprobs[i])));
        }
        let lse = logsumexp(&logprobs);
        if lse.is_nan() || lse.abs() >= NORMALIZATION_TOLERANCE {
            return Err(LmError::InvalidDistribution(format!("logsumexp is {lse}")));
        }
        Ok(Self { logprobs })
    }

    /// Normalizes arbitrary log-space scores.
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self, LmError> {
        if scores.len() < 2 {
            return Err(LmError::InvalidDistribution(format!("length {} < 2", scores.len())));
        }
        if scores.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(LmError::InvalidDistribution("NaN or +inf score".into()));
        }
        let lse = logsumexp(&scores);
        if lse == f64::NEG_INFINITY {
            return Err(LmError::InvalidDistribution("no token has positive mass".into()));
        }
        for s in &mut scores {
            *s -= lse;
        }
        Ok(Self { logprobs: scores })
    }

    /// For models whose output is normalized by construction.
    pub(crate) fn from_logprobs_unchecked(logprobs: Vec<f64>) -> Self {
        debug_assert!(logsumexp(&logprobs).abs() < NORMALIZATION_TOLERANCE);
        Self { logprobs }
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            logprobs: vec![-(size as f64).ln(); size],
        }
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob(&self, token: TokenId) -> f64 {
        self.logprobs[token as usize]
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.logprobs[token as usize].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logprobs.iter().map(|x| x.exp()).collect()
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        (0..self.logprobs.len() as TokenId)
            .min_by(|&a, &b| rank_order(&self.logprobs, a, b))
            .expect("distribution is non-empty")
    }

    /// Ids with non-zero probability, ascending.
    pub fn support(&self) -> Vec<TokenId> {
        (0..self.logprobs.len() as TokenId)
            .filter(|&i| self.logprobs[i as usize] > f64::NEG_INFINITY)
            .collect()
    }

    pub fn into_logprobs(self) -> Vec<f64> {
        self.logprobs
    }
}

impl TryFrom<Vec<f64>> for TokenDistribution {
    type Error = LmError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_logprobs(v)
    }
}

impl From<TokenDistribution> for Vec<f64> {
    fn from(d: TokenDistribution) -> Self {
        d.logprobs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_scores_normalizes() {
        let d = TokenDistribution::from_scores(vec![0.0, 0.0, f64::NEG_INFINITY, 1.0f64.ln()]).unwrap();
        assert!((d.prob(0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.prob(2), 0.0);
        assert!(logsumexp(d.logprobs()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(TokenDistribution::from_logprobs(vec![0.0, 0.0]).is_err());
        assert!(TokenDistribution::from_logprobs(vec![f64::NAN, 0.0]).is_err());
        assert!(TokenDistribution::from_logprobs(vec![0.0]).is_err());
        assert!(TokenDistribution::from_scores(vec![f64::NEG_INFINITY; 3]).is_err());
        assert!(TokenDistribution::from_scores(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_by_id() {
        let d = TokenDistribution::from_scores(vec![0.0, 1.0, 1.0, 0.5]).unwrap();
        assert_eq!(d.argmax(), 1);
        assert_eq!(TokenDistribution::uniform(5).argmax(), 0);
    }
}
