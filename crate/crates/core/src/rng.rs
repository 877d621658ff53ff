//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(seed, label, counter, stream)`. Particle `i` at step `t` always sees the
//! same numbers regardless of thread scheduling or the order jobs run in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a sequence of words.
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(seed), |acc, &w| mix64(acc ^ mix64(w)))
}

/// Purpose tags so independent consumers of one seed never collide.
pub mod label {
    pub const INIT: u64 = 0x494E_4954;
    pub const PROPAGATE: u64 = 0x5052_4F50;
    pub const RESAMPLE: u64 = 0x5245_5341;
    pub const OBSERVE: u64 = 0x4F42_5345;
    pub const TRAJECTORY: u64 = 0x5452_414A;
    pub const CHAIN: u64 = 0x4348_4149;
    pub const FILTER: u64 = 0x4649_4C54;
    pub const DATASET: u64 = 0x4441_5441;
}

/// A key shared by all streams at one `(label, counter)` address.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn new(seed: u64, label: u64, counter: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = derive_seed(seed, &[label, counter]);
        for chunk in key.chunks_exact_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        StreamKey(key)
    }

    /// Independent generator number `stream` under this key.
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(stream);
        rng
    }
}

/// Convenience: a single generator for `(seed, label, counter)`.
pub fn stream_rng(seed: u64, label: u64, counter: u64) -> ChaCha8Rng {
    StreamKey::new(seed, label, counter).stream(0)
}
