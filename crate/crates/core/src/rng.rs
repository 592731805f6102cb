//! Seedable random streams, one per (quantile level, model, chain).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used by every sampler in the crate.
pub type ChainRng = ChaCha8Rng;

/// Identifies one independent random stream below a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub tau_index: u16,
    pub model: u32,
    pub chain: u32,
}

impl StreamId {
    pub fn new(tau_index: u16, model: u32, chain: u32) -> Self {
        Self {
            tau_index,
            model,
            chain,
        }
    }

    fn word(&self) -> u64 {
        // 16 bits quantile index, 24 bits model, 24 bits chain.
        ((self.tau_index as u64) << 48)
            | (((self.model as u64) & 0xff_ffff) << 24)
            | ((self.chain as u64) & 0xff_ffff)
    }
}

/// Derives the stream `id` from `seed`. Distinct ids never overlap.
pub fn stream(seed: u64, id: StreamId) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.word());
    rng
}
