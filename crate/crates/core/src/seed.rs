//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value obtained by folding integer coordinates into a master seed with the
//! SplitMix64 finalizer:
//!
//! ```text
//! derive(seed, [a, b, ...]) = mix(... mix(mix(seed) ^ a) ^ b ...)
//! ```
//!
//! `mix` is a bijection on `u64`, so two derivation paths of the same length
//! collide only when their coordinates differ in a way that cancels through
//! the finalizer, which does not happen on the grids used here (checked in
//! the tests).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ p))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    rng(derive(seed, path))
}

/// Stream tags, so that sibling streams drawn from one seed never share state.
pub(crate) mod tag {
    pub const SCENARIO_LOCATIONS: u64 = 1;
    pub const SCENARIO_CHANNEL: u64 = 2;
    pub const WINDOW: u64 = 3;
    pub const CORPUS: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const PAIRS_TRAIN: u64 = 6;
    pub const PAIRS_VAL: u64 = 7;
    pub const PAIRS_TEST: u64 = 8;
    pub const INIT: u64 = 9;
    pub const SHUFFLE: u64 = 10;
    pub const KMEANS: u64 = 11;
    pub const SAME_PAIRS: u64 = 12;
    pub const DIFF_PAIRS: u64 = 13;
}
