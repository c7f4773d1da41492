//! Seeded random streams.
//!
//! Every run element owns a single 64-bit seed. Independent sub-streams
//! (data generation, weight init, shuffling, inner maximisation) are derived
//! from it with SplitMix64 so that adding draws to one stream never shifts
//! another. Each stream is a ChaCha8 generator; results are bit-exact within
//! one build of this crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed for a named stream.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h = splitmix64(seed);
    for b in stream.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, name: &str) -> Rng {
    seeded(derive_seed(seed, name))
}
