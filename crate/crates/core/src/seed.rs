//! Seed derivation helpers.
//!
//! Every randomized operation takes a 64-bit seed. Sub-streams (per epoch, per
//! sweep run) are derived by mixing the base seed with the stream coordinates
//! through SplitMix64, so nearby coordinates give unrelated generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type Rng = ChaCha8Rng;

/// One SplitMix64 finalization round.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with a sequence of stream coordinates.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
