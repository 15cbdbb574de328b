//! Seeded, splittable random streams.
//!
//! Every stochastic operation takes an explicit seed and draws from its own
//! ChaCha stream; there is no global generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers keep the generators of different subsystems apart even
/// when they share a user seed.
pub mod tag {
    pub const PHANTOM: u64 = 1;
    pub const PULSE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const DRIFT: u64 = 4;
    pub const SPECTRO: u64 = 5;
    pub const SAMPLING: u64 = 6;
    pub const AGENT: u64 = 7;
    pub const ENV: u64 = 8;
    pub const EVAL: u64 = 9;
}

pub fn stream(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// SplitMix64 finalizer; derives well-mixed child seeds from (seed, index).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
