use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Per-item category counts for a fixed number of annotators per item.
/// Category `j` stands for Likert score `j + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    counts: Vec<Vec<u32>>,
    annotators_per_item: u32,
    categories: usize,
}

impl RatingMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self, MetricsError> {
        let first = counts.first().ok_or(MetricsError::EmptyInput)?;
        let categories = first.len();
        if categories == 0 {
            return Err(MetricsError::InvalidMatrix("no categories".into()));
        }
        let annotators: u32 = first.iter().sum();
        for (i, row) in counts.iter().enumerate() {
            if row.len() != categories {
                return Err(MetricsError::InvalidMatrix(format!(
                    "row {i} has {} categories, expected {categories}",
                    row.len()
                )));
            }
            let s: u32 = row.iter().sum();
            if s != annotators {
                return Err(MetricsError::InvalidMatrix(format!(
                    "row {i} has {s} ratings, expected {annotators}"
                )));
            }
        }
        if annotators == 0 {
            return Err(MetricsError::InvalidMatrix("rows have no ratings".into()));
        }
        Ok(Self { counts, annotators_per_item: annotators, categories })
    }

    /// Builds counts from per-item score lists with scores in `1..=categories`.
    pub fn from_scores(items: &[Vec<u32>], categories: usize) -> Result<Self, MetricsError> {
        let mut counts = Vec::with_capacity(items.len());
        for (i, scores) in items.iter().enumerate() {
            let mut row = vec![0u32; categories];
            for &s in scores {
                if s == 0 || s as usize > categories {
                    return Err(MetricsError::InvalidMatrix(format!(
                        "item {i} has score {s} outside 1..={categories}"
                    )));
                }
                row[s as usize - 1] += 1;
            }
            counts.push(row);
        }
        Self::new(counts)
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn annotators_per_item(&self) -> u32 {
        self.annotators_per_item
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' κ = (P̄ − P̄e) / (1 − P̄e).
///
/// When every rating lands in one category, P̄e = 1 and the ratio is 0/0;
/// that case returns 1.0 because all items then agree perfectly.
pub fn fleiss_kappa(m: &RatingMatrix) -> Result<f64, MetricsError> {
    let n = m.annotators_per_item as f64;
    if m.annotators_per_item < 2 {
        return Err(MetricsError::InvalidMatrix("kappa needs at least 2 annotators per item".into()));
    }
    let items = m.items() as f64;
    let mut col = vec![0.0; m.categories];
    let mut p_bar = 0.0;
    for row in &m.counts {
        let mut sq = 0.0;
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            col[j] += c;
            sq += c * c;
        }
        p_bar += (sq - n) / (n * (n - 1.0));
    }
    p_bar /= items;
    let pe: f64 = col.iter().map(|c| (c / (items * n)).powi(2)).sum();
    if pe >= 1.0 - 1e-15 {
        return if p_bar >= 1.0 - 1e-15 { Ok(1.0) } else { Err(MetricsError::DegenerateMatrix) };
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

/// Mean of every individual rating.
pub fn likert_mean(m: &RatingMatrix) -> f64 {
    let mut sum = 0.0;
    let mut total = 0.0;
    for row in &m.counts {
        for (j, &c) in row.iter().enumerate() {
            sum += (j + 1) as f64 * c as f64;
            total += c as f64;
        }
    }
    sum / total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_items_score_one() {
        let m = RatingMatrix::new(vec![vec![5, 0, 0, 0], vec![0, 0, 5, 0], vec![0, 5, 0, 0]]).unwrap();
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
        let single = RatingMatrix::new(vec![vec![0, 5], vec![0, 5]]).unwrap();
        assert_eq!(fleiss_kappa(&single).unwrap(), 1.0);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(RatingMatrix::new(vec![vec![2, 3], vec![1, 1]]).is_err());
        assert!(RatingMatrix::new(vec![vec![2, 3], vec![5]]).is_err());
        assert!(RatingMatrix::new(vec![]).is_err());
        assert!(fleiss_kappa(&RatingMatrix::new(vec![vec![1, 0]]).unwrap()).is_err());
    }

    #[test]
    fn likert_means() {
        let all_four = RatingMatrix::from_scores(&[vec![4, 4], vec![4, 4]], 4).unwrap();
        assert_eq!(likert_mean(&all_four), 4.0);
        let half = RatingMatrix::from_scores(&[vec![1, 3], vec![3, 1]], 4).unwrap();
        assert_eq!(likert_mean(&half), 2.0);
        assert!(RatingMatrix::from_scores(&[vec![5]], 4).is_err());
    }
}
