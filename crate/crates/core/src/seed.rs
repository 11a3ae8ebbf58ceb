//! Deterministic seed derivation.
//!
//! Every stochastic component draws from its own `ChaCha8Rng` whose seed is
//! derived from a master seed and a list of stream tags. Derivation is a pure
//! function, so parallel workers get identical streams regardless of
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Stream tags used across the crate. Values are arbitrary but fixed.
pub mod stream {
    pub const INIT: u64 = 0x01;
    pub const TRAIN: u64 = 0x02;
    pub const GATE_FIT: u64 = 0x03;
    pub const RESET: u64 = 0x04;
    pub const ROLLOUT: u64 = 0x05;
    pub const BOOTSTRAP: u64 = 0x06;
    pub const MEMBER: u64 = 0x07;
    pub const EVAL: u64 = 0x08;
    pub const PROBE: u64 = 0x09;
    pub const DEMOS: u64 = 0x0a;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`, one splitmix round per tag.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn rng(seed: u64, tags: &[u64]) -> LabRng {
    LabRng::seed_from_u64(derive(seed, tags))
}
