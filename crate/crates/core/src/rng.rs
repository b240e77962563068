//! Seeded random number generation.
//!
//! Every random draw in the crate comes from [`Xoshiro256PlusPlus`], seeded
//! through SplitMix64 expansion of a single `u64`. Both algorithms are fully
//! specified and platform independent, so a seed pins generated instances,
//! solver initialisations and training shuffles bit for bit.

use rand::SeedableRng;
pub use rand_xoshiro::Xoshiro256PlusPlus;

/// The crate-wide generator type.
pub type Rng = Xoshiro256PlusPlus;

/// Builds the generator for `seed`.
pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Derives an independent seed for the `index`-th child stream of `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // one SplitMix64 round over the combined key
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
