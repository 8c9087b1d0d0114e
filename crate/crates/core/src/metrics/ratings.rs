use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{MetricsError, RatingMatrix};

/// One row of a ratings CSV: `item_id,metric,annotator_id,score`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub item_id: String,
    pub metric: String,
    pub annotator_id: String,
    pub score: u32,
}

pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<Rating>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let r: Rating = row?;
        if r.score == 0 {
            return Err(MetricsError::BadRating { line: i + 2, message: "score must be at least 1".into() });
        }
        out.push(r);
    }
    Ok(out)
}

/// Groups ratings by metric into count matrices over `categories` Likert
/// points. Items are ordered by id; every item must have the same number of
/// ratings within a metric.
pub fn rating_matrices(ratings: &[Rating], categories: usize) -> Result<BTreeMap<String, RatingMatrix>, MetricsError> {
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<u32>>> = BTreeMap::new();
    for r in ratings {
        grouped
            .entry(&r.metric)
            .or_default()
            .entry(&r.item_id)
            .or_default()
            .push(r.score);
    }
    let mut out = BTreeMap::new();
    for (metric, items) in grouped {
        let scores: Vec<Vec<u32>> = items.into_values().collect();
        let m = RatingMatrix::from_scores(&scores, categories)
            .map_err(|e| MetricsError::InvalidMatrix(format!("metric {metric}: {e}")))?;
        out.insert(metric.to_string(), m);
    }
    Ok(out)
}
