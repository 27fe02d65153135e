//! Seed derivation for reproducible experiments.
//!
//! Every stochastic operation takes an explicit `u64` seed. When a single
//! experiment seed has to drive several operations, each operation draws its
//! own seed with [`derive_seed`] from a fixed stream number:
//!
//! | stream | consumer |
//! |---|---|
//! | [`STREAM_ENF`] | AR(1) ENF path |
//! | [`STREAM_NOISE`] | additive white noise |
//! | [`STREAM_CORRUPTION`] + m | band noise on harmonic `m` |
//! | [`STREAM_ETA`] | threshold simulation |
//! | [`STREAM_TRIAL`] + k | Monte Carlo trial `k` |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_ENF: u64 = 0x0100;
pub const STREAM_NOISE: u64 = 0x0200;
pub const STREAM_CORRUPTION: u64 = 0x0300;
pub const STREAM_ETA: u64 = 0x0400;
pub const STREAM_TRIAL: u64 = 0x1_0000;

/// SplitMix64 finaliser applied to `base ^ golden * (stream + 1)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
