//! Seed derivation so per-item randomness does not depend on scheduling order.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed for item `index` under a global seed.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    mix64(global ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}
