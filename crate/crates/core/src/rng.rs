//! Seeded random streams.
//!
//! Every stochastic step (shuffles, weight init, dropout masks, synthetic
//! data) draws from a SplitMix64 generator. SplitMix64 is a 64-bit
//! counter-based generator: the state advances by a fixed odd constant and
//! each output is a bijective mix of the counter, so streams are identical on
//! every platform. Independent sub-streams are keyed by the output of the
//! parent stream at a fixed counter position.

use rand::{Rng, SeedableRng};
pub use rand_xoshiro::SplitMix64;

/// Purpose tags for sub-streams derived from one user seed.
pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TRAIN_DROPOUT: u64 = 4;
    pub const MC_PASSES: u64 = 5;
    pub const SYNTHETIC: u64 = 6;
}

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Seed of sub-stream `index`: the `index`-th output (0-based) of the
/// SplitMix64 stream started at `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 output k is mix(seed + (k+1)·φ); jumping is O(1).
    const PHI: u64 = 0x9e37_79b9_7f4a_7c15;
    let start = seed.wrapping_add(index.wrapping_mul(PHI));
    SplitMix64::seed_from_u64(start).next_u64()
}

/// Generator for sub-stream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> SplitMix64 {
    seeded(derive_seed(seed, index))
}
