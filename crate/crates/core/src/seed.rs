//! Deterministic seed derivation so parallel trials are schedule-independent.

use rand::rngs::StdRng;
use rand::SeedableRng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of indices (study, grid point, repetition, ...).
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(master), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn rng_at(master: u64, path: &[u64]) -> StdRng {
    rng(derive(master, path))
}
