//! Counter-based random number streams.
//!
//! Every random draw in this crate is keyed by `(master seed, stream id,
//! step index)`. A fresh ChaCha8 generator is derived per key, so the
//! environment at step `k` of replicate `i` can be regenerated in any order
//! without storing it. This is what makes backward iterations replay the
//! exact forward environment sequence, and what makes parallel replicates
//! independent of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to decorrelate the key words.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the key `(seed, stream, step)`.
pub fn rng_at(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    let w0 = splitmix64(seed);
    let w1 = splitmix64(stream ^ 0x5851_f42d_4c95_7f2d);
    let w2 = splitmix64(step ^ 0x1405_7b7e_f767_814f);
    let w3 = splitmix64(w0 ^ w1.rotate_left(17) ^ w2.rotate_left(43));
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&w0.to_le_bytes());
    key[8..16].copy_from_slice(&w1.to_le_bytes());
    key[16..24].copy_from_slice(&w2.to_le_bytes());
    key[24..32].copy_from_slice(&w3.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Generator for a whole stream (no per-step keying).
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    rng_at(seed, stream, u64::MAX)
}

/// A `(seed, stream)` pair addressing the per-step environment generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvStream {
    pub seed: u64,
    pub stream: u64,
}

impl EnvStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        EnvStream { seed, stream }
    }

    /// Generator for the environment drawn at step `step` (1-based).
    pub fn rng_at(&self, step: u64) -> ChaCha8Rng {
        rng_at(self.seed, self.stream, step)
    }
}
