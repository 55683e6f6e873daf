//! Deterministic seed derivation.
//!
//! Every randomized stage takes a single `u64` seed; nested stages (per epoch,
//! per sample, per view) derive sub-seeds through `mix` so that changing one
//! stream never shifts another. ChaCha8 is used as the generator everywhere
//! because its output is stable across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; a cheap bijective mixer with good avalanche.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a sub-seed from a base seed and a stream tag.
#[inline]
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derive a sub-seed from a base seed and two stream tags.
#[inline]
pub fn mix2(seed: u64, tag_a: u64, tag_b: u64) -> u64 {
    mix(mix(seed, tag_a), tag_b)
}

/// Seeded generator for a given stream.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
