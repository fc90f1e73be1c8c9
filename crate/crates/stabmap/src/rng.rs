//! Deterministic seeded RNG streams.
//!
//! All randomness flows from one base seed through named sub-streams, so
//! adding a pipeline stage never shifts the draws of earlier stages.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// RNG for the sub-stream `name` derived from `seed`. Identical
/// (seed, name) pairs always yield the same stream.
pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let tag = fnv1a(name);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(&seed.rotate_left(17).to_le_bytes());
    key[24..32].copy_from_slice(&tag.rotate_left(31).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
