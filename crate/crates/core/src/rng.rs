//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`.
//! Child seeds are derived from a parent seed and a path of counters by
//! folding each counter through SplitMix64:
//!
//! ```text
//! s0 = mix(parent)
//! s_{i+1} = mix(s_i ^ (counter_i + 0x9E3779B97F4A7C15 * (i + 1)))
//! ```
//!
//! so `(master, eps_index, k_index, trial)` always names the same stream
//! no matter which order cells are executed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DpRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .enumerate()
        .fold(splitmix64(parent), |acc, (i, &c)| {
            splitmix64(acc ^ c.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)))
        })
}

pub fn seeded(seed: u64) -> DpRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived(parent: u64, path: &[u64]) -> DpRng {
    seeded(derive_seed(parent, path))
}
