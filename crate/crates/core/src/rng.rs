//! Seed derivation.
//!
//! Every stochastic call site draws from its own ChaCha stream whose seed is a
//! hash of the root seed, a purpose tag and a small tuple of ordinals (ids,
//! iteration numbers). Streams never depend on the order in which work is
//! scheduled, so the thread count cannot change any output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different call sites disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Prior = 1,
    Decode = 2,
    Fitness = 3,
    Mutation = 4,
    Crossover = 5,
    Operator = 6,
    StageNoise = 7,
    ChemistryAxes = 8,
    Immigration = 9,
    Harness = 10,
    Landscape = 11,
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `root`, a purpose and an ordinal tuple.
pub fn derive(root: u64, purpose: Purpose, parts: &[u64]) -> u64 {
    let mut h = splitmix64(root ^ (purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

pub fn stream(root: u64, purpose: Purpose, parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(root, purpose, parts))
}
