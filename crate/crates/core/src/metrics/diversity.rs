use std::collections::HashSet;
use std::hash::Hash;

use super::MetricsError;
use crate::decode::GenerationRecord;

/// Distinct n-grams over total n-grams in one response. Responses shorter
/// than `n` score 0.
pub fn dist_n<T: Eq + Hash>(tokens: &[T], n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidN(n));
    }
    if tokens.len() < n {
        return Ok(0.0);
    }
    let windows = tokens.windows(n);
    let total = windows.len();
    let distinct: HashSet<&[T]> = windows.collect();
    Ok(distinct.len() as f64 / total as f64)
}

/// Macro-average of per-response [`dist_n`].
pub fn corpus_dist_n(records: &[GenerationRecord], n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidN(n));
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for r in records {
        sum += dist_n(&r.response_tokens(), n)?;
    }
    Ok(sum / records.len() as f64)
}

/// Distinct n-grams across all responses over total n-grams across all
/// responses. N-grams never span two responses.
pub fn pooled_dist_n(records: &[GenerationRecord], n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidN(n));
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut distinct = HashSet::new();
    let mut total = 0usize;
    for r in records {
        let toks = r.response_tokens();
        for w in toks.windows(n) {
            distinct.insert(w.to_vec());
            total += 1;
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(distinct.len() as f64 / total as f64)
}
