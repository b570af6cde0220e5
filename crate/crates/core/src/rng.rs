//! Seed derivation. Every stochastic step in the crate draws from a ChaCha
//! stream keyed by a (seed, key) pair so results are reproducible and
//! independent of call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn keyed(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(key)))
}

/// Distinct stream families so e.g. init and dropout never share a stream.
pub(crate) mod stream {
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const INIT: u64 = 0x494E_4954;
    pub const DROPOUT: u64 = 0x4452_4F50;
    pub const BATCH: u64 = 0x4241_5443;
    pub const MIX: u64 = 0x4D49_5821;
}

pub(crate) fn keyed2(seed: u64, family: u64, key: u64) -> ChaCha8Rng {
    keyed(splitmix64(seed ^ family), key)
}
