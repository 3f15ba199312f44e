//! Seeded random sources and replicate seed derivation.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

/// Random source used by every stochastic routine in the crate.
pub type SimRng = Pcg64Mcg;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for work item `index` under `base`. Distinct indices give
/// unrelated streams without sharing a generator.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
