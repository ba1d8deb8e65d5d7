//! Counter-based seed derivation.
//!
//! A derived seed depends only on the root seed and the index path
//! (replication, bootstrap replicate, chain, ...), never on scheduling, so
//! serial and parallel runs consume identical random streams.
//!
//! The hash is the SplitMix64 finalizer folded over the path:
//! `h₀ = mix(root ⊕ 0x9E3779B97F4A7C15)`, `h_{k+1} = mix(h_k ⊕ mix(p_k + (k+1)·0x9E3779B97F4A7C15))`.
//! It is part of the output format; changing it changes every result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut h = mix(root ^ GOLDEN);
    for (k, &p) in path.iter().enumerate() {
        h = mix(h ^ mix(p.wrapping_add((k as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

/// The generator used for every random stream in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
