//! The single pseudo-random generator used wherever a seed appears.
//!
//! PCG XSL RR 128/64 (`Pcg64`) is portable and value-stable across platforms,
//! so every seeded operation reproduces bit-for-bit.

use rand::SeedableRng;
pub use rand_pcg::Pcg64 as PinnedRng;

pub fn seeded(seed: u64) -> PinnedRng {
    PinnedRng::seed_from_u64(seed)
}

/// Derives an independent child seed for sub-task `index` (a tree, a run, a
/// pair) from a base seed. SplitMix64 finalizer over `base + (index + 1)·γ`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
