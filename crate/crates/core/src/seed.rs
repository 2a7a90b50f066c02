//! Deterministic seed derivation.
//!
//! Plan and fold seeds are incremented from the run's base seed:
//! `base + plan_index * FOLD_STRIDE + fold_index`, so the first plan's
//! plan-level seed is the base seed itself (10 by default). Fold index 0 is
//! the plan level; inner folds use 1..=k.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default base seed for every run.
pub const DEFAULT_BASE_SEED: u64 = 10;

/// Maximum number of fold slots per plan (fold indices must stay below).
pub const FOLD_STRIDE: u64 = 100;

/// Seed for `(plan_index, fold_index)`; injective for `fold_index < FOLD_STRIDE`.
pub fn derive_seed(base: u64, plan_index: usize, fold_index: usize) -> u64 {
    assert!(
        (fold_index as u64) < FOLD_STRIDE,
        "fold index {fold_index} exceeds the seed stride"
    );
    base.wrapping_add((plan_index as u64).wrapping_mul(FOLD_STRIDE))
        .wrapping_add(fold_index as u64)
}

/// SplitMix64 finalizer.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a stream tag (e.g. a channel index).
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Stable 64-bit FNV-1a hash of a string.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn pinned_values() {
        assert_eq!(derive_seed(10, 0, 0), 10);
        assert_eq!(derive_seed(10, 3, 2), 312);
        assert_eq!(hash_str(""), 0xcbf2_9ce4_8422_2325);
    }

    #[test]
    fn distinct_over_d5_grid() {
        let mut seen = HashSet::new();
        for plan in 0..75 {
            for fold in 0..=5 {
                assert!(seen.insert(derive_seed(10, plan, fold)));
            }
        }
        assert_eq!(seen.len(), 75 * 6);
    }
}
