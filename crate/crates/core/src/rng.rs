//! Seed derivation. Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, purpose)` and selected by `index`, so distinct purposes and
//! indices never share a stream and results do not depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; the discriminant is part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    EpisodeShape = 1,
    EpisodeNoise = 2,
    Split = 3,
    NegativeSampling = 4,
    Init = 5,
    Shuffle = 6,
    Dropout = 7,
}

/// Key bytes: `seed` (LE) then the purpose code (LE), zero-filled; the
/// ChaCha stream id is `index`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
