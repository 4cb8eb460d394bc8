//! Seeding utilities.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`] seeded from a `u64`.
//! Child seeds are derived with the SplitMix64 finalizer so that independent
//! streams (episode `i` of an evaluation, the mask of a run, the meta-policy
//! sampler, ...) never share state and are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used with [`derive_seed`]. Kept distinct so that runs sharing a
/// seed do not reuse random numbers between subsystems.
pub mod stream {
    pub const INNER_INIT: u64 = 1;
    pub const MASK: u64 = 2;
    pub const META_INIT: u64 = 3;
    pub const META_SAMPLE: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const BASELINE_ENV: u64 = 7;
    pub const EPISODE: u64 = 8;
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
