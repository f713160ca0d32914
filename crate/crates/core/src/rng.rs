//! Seeded random streams.
//!
//! Every replicate gets its own ChaCha stream derived from the master seed
//! and the replicate index, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SlamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SlamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-stream `index` of the master `seed`.
pub fn substream(seed: u64, index: u64) -> SlamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, used when a replicate needs to seed another component.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
