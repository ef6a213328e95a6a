//! Seed handling. Every sampler owns a ChaCha stream built from a 64-bit
//! seed; sub-streams are derived by mixing the parent seed with a tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SblRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SblRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a seed and an ordered list of indices. Used for per-trial seeds
/// (`derive_seed(master, &[grid, trial])`) and for tagged sub-streams.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x632b_e59b_d9b4_e019))))
}
