//! Seed derivation and the two random streams used by a run.
//!
//! Channel evolution and policy randomness draw from separate ChaCha streams
//! keyed on the same 64-bit seed, so two runs sharing a seed see the same
//! channel sample path no matter what their transmission policies do.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type SimRng = ChaCha8Rng;

const CHANNEL_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const AUX_STREAM: u64 = 2;

/// Random stream that drives channel occupancy.
pub fn channel_rng(seed: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CHANNEL_STREAM);
    rng
}

/// Random stream that drives randomized transmission decisions.
pub fn policy_rng(seed: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POLICY_STREAM);
    rng
}

/// Random stream for estimators (bootstrap resampling and the like).
pub fn aux_rng(seed: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(AUX_STREAM);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of indices
/// (sweep point, replication, ...). Deterministic and order sensitive.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &k| {
        splitmix64(acc.rotate_left(23) ^ splitmix64(k))
    })
}
