//! Deterministic seed derivation. Every random choice in the pipeline draws
//! from a stream keyed by (master seed, labels), so adding components or
//! reordering work never perturbs unrelated streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; stable across platforms and releases.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1000_0000_01B3);
    }
    h
}

/// Derive a child seed from a master seed and a label.
pub fn stream(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()))
}

/// Derive a child seed from a master seed, a label, and an index.
pub fn stream_idx(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(stream(master, label) ^ splitmix64(index))
}

/// Seeded generator for a named stream.
pub fn rng(master: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream(master, label))
}

/// Seeded generator for an indexed stream.
pub fn rng_idx(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_idx(master, label, index))
}
