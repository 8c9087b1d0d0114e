use super::MetricsError;
use crate::decode::GenerationRecord;

pub const HASH_EMBEDDING_DIM: usize = 64;

/// Maps text to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricsError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricsError> {
        (**self).embed(text)
    }
}

/// Mean of per-token pseudo-random vectors. Each whitespace token hashes
/// (FNV-1a) to a seed whose splitmix64 stream fills its vector with values
/// in `[-1, 1)`, so equal tokens always share a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(HASH_EMBEDDING_DIM, 0)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut state = fnv1a(token.as_bytes()) ^ self.seed;
        (0..self.dim)
            .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 52) as f64 - 1.0)
            .collect()
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    /// Empty text embeds to the zero vector.
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricsError> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for tok in text.split_whitespace() {
            for (a, v) in acc.iter_mut().zip(self.token_vector(tok)) {
                *a += v;
            }
            n += 1;
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        Ok(acc)
    }
}

/// `1 − cos(a, b)`, clamped to `[0, 2]`. A zero vector is at distance 0
/// from another zero vector and 1 from anything else.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na * nb)).clamp(0.0, 2.0),
    }
}

/// Mean cosine distance over all unordered pairs of texts, summed in pair
/// index order.
pub fn sent_diversity_texts<S: AsRef<str>, E: Embedder + ?Sized>(texts: &[S], embedder: &E) -> Result<f64, MetricsError> {
    if texts.len() < 2 {
        return Err(MetricsError::TooFewRecords { needed: 2, got: texts.len() });
    }
    let dim = embedder.dimension();
    let mut vecs = Vec::with_capacity(texts.len());
    for t in texts {
        let v = embedder.embed(t.as_ref())?;
        if v.len() != dim {
            return Err(MetricsError::DimensionMismatch { expected: dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MetricsError::EmbedderUnavailable("non-finite embedding".into()));
        }
        vecs.push(v);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            sum += cosine_distance(&vecs[i], &vecs[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

pub fn sent_diversity<E: Embedder + ?Sized>(records: &[GenerationRecord], embedder: &E) -> Result<f64, MetricsError> {
    let texts: Vec<&str> = records.iter().map(|r| r.response.as_str()).collect();
    sent_diversity_texts(&texts, embedder)
}
