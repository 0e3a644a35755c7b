//! Deterministic derivation of independent random streams.
//!
//! Every stochastic component draws from its own `ChaCha8` stream whose seed
//! is a hash of the run seed and a short tag path (rollout index, episode
//! index, purpose). Two calls with the same tag path see identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes. Kept distinct so that adding draws to one consumer never
/// shifts the numbers seen by another.
pub mod tag {
    pub const INITIAL_STATE: u64 = 0x01;
    pub const WIENER: u64 = 0x02;
    pub const OBSERVATION: u64 = 0x03;
    pub const TIMES: u64 = 0x04;
    pub const BRIDGE: u64 = 0x05;
    pub const PLANNING: u64 = 0x06;
    pub const ORACLE: u64 = 0x07;
    pub const OUTPUT_PICK: u64 = 0x08;
    pub const EPISODE: u64 = 0x09;
    pub const PREFIX: u64 = 0x0a;
    pub const CONTINUATION: u64 = 0x0b;
    pub const MARGINAL: u64 = 0x0c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with a path of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tags))
}
