use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Sampling stream: ChaCha20 seeded with `seed_from_u64`, each uniform draw
/// taking the top 53 bits of one `u64` output. Both steps are fixed by the
/// algorithm, so a seed gives the same draws on every platform.
#[derive(Debug, Clone)]
pub struct SampleRng {
    inner: ChaCha20Rng,
}

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
