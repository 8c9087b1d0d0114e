//! Diversity metrics and rating statistics.

mod agreement;
mod diversity;
mod embed;
mod ratings;
mod report;
mod stats;

pub use agreement::{fleiss_kappa, likert_mean, RatingMatrix};
pub use diversity::{corpus_dist_n, dist_n, pooled_dist_n};
pub use embed::{cosine_distance, sent_diversity, sent_diversity_texts, Embedder, HashEmbedder, HASH_EMBEDDING_DIM};
pub use ratings::{read_ratings, rating_matrices, Rating};
pub use report::{ConfigKey, MetricReport};
pub use stats::{paired_t_test, spearman, welch_t_test, SpearmanResult, TTestResult, EXACT_SPEARMAN_MAX_N};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("n must be at least 1, got {0}")]
    InvalidN(usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least {needed} items, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid rating matrix: {0}")]
    InvalidMatrix(String),
    #[error("kappa undefined: every rating falls in one category but items disagree")]
    DegenerateMatrix,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series is constant, rank correlation undefined")]
    ConstantInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("ratings line {line}: {message}")]
    BadRating { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
