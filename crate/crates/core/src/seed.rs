//! Derivation of labelled child seeds from a single run seed.
//!
//! Every randomized stage (splitting, initialization, per-epoch shuffling,
//! Monte-Carlo trials) draws its own generator from `derive(run_seed, label)`
//! so stages stay decoupled: inserting a draw in one stage never perturbs
//! another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-period bijection on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stream label.
pub fn derive(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(base ^ h)
}

/// Derive a child seed carrying an index (per-item or per-epoch streams).
pub fn derive_indexed(base: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(base, label) ^ splitmix64(index))
}

/// The deterministic generator used throughout the crate.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
