//! Seeded random number generation.
//!
//! Every random quantity in the crate is drawn from [`SignalRng`], a 128-bit
//! state PCG generator with 64-bit output. Child seeds for datasets are
//! derived with a SplitMix64 finalizer so that each (stream, index) pair maps
//! to a well-separated seed.

use rand::SeedableRng;

pub type SignalRng = rand_pcg::Pcg64Mcg;

pub fn seeded(seed: u64) -> SignalRng {
    SignalRng::seed_from_u64(seed)
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a path of stream identifiers.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}
