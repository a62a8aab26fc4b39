//! Deterministic sub-seed derivation from one root seed.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` under `root`. Distinct streams give unrelated
/// seeds; the mapping is stable across releases.
pub fn derive(root: u64, stream: u64) -> u64 {
    mix(mix(root) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Named streams so components never share randomness by accident.
pub mod stream {
    pub const AUTOENCODER: u64 = 1;
    pub const RECIPROCAL_POINTS: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const RUN: u64 = 5;
    pub const SYNTHETIC: u64 = 6;
}
