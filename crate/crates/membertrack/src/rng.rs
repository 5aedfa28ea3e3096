//! Deterministic stream derivation for reproducible experiments.
//!
//! Every source of randomness in a simulation is a ChaCha stream derived from
//! the master seed plus a key path (trial index, tick, purpose tag). Streams
//! derived this way are independent of execution order, so trials and reward
//! evaluations can run in parallel without changing any output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a key path into a single stream seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6A09_E667_F3BC_C909);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// A ChaCha stream keyed by `(master, parts)`.
pub fn derive_rng(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
