//! Counter-based seed derivation.
//!
//! Every random quantity in the toolkit is keyed by `(seed, role, indices...)`
//! rather than drawn from a shared sequential stream, so results do not depend
//! on evaluation order or thread count.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed together with a path of indices into a new 64-bit seed.
#[inline]
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for &p in path {
        h = mix64(h ^ mix64(p.wrapping_add(GOLDEN)).wrapping_add(h << 6));
    }
    h
}

/// A small generator keyed by `(seed, path)`.
#[inline]
pub fn keyed_rng(seed: u64, path: &[u64]) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(derive_seed(seed, path))
}
