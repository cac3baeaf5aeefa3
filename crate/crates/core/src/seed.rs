//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng`. A root seed `s` and a
//! counter `k` (taskset index, trial index, ...) give the child seed
//! `derive(s, k) = splitmix64(s ^ splitmix64(k + 1))`. Nested counters are
//! applied left to right, so taskset `j` of grid point `g` under root `s` uses
//! `derive(derive(s, g), j)`. Any single element of an experiment can be
//! regenerated from its derived seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(root: u64, counter: u64) -> u64 {
    splitmix64(root ^ splitmix64(counter.wrapping_add(1)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
