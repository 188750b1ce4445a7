//! Seed derivation for reproducible per-component random streams.
//!
//! Every source of randomness in the crate is a `ChaCha8Rng` seeded by
//! [`derive_seed`]: a root seed is mixed with a string label and a list
//! of integer coordinates (epoch, task index, group member, ...) through
//! splitmix64. Streams derived for distinct coordinates are independent,
//! and the same coordinates always reproduce the same stream, so batch
//! work can run in any order or on any number of threads without
//! changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One splitmix64 step: mixes `state` into a well-distributed output.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes; keeps stream labels order-sensitive.
pub(crate) fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from `(root, label, parts)`.
pub fn derive_seed(root: u64, label: &str, parts: &[u64]) -> u64 {
    let mut state = splitmix64(root ^ hash_label(label));
    for &p in parts {
        state = splitmix64(state ^ p);
    }
    state
}

/// Derive a ready-to-use RNG stream from `(root, label, parts)`.
pub fn stream(root: u64, label: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, parts))
}
