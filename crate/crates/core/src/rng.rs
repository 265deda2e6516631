//! Random streams.
//!
//! Every replicate owns an independent `xoshiro256++` generator. The 256-bit
//! state is expanded from a 64-bit stream seed with SplitMix64 (the standard
//! `seed_from_u64` of `rand_xoshiro`). Stream seeds for replicate `i` of an
//! experiment are derived from the master seed as
//!
//! ```text
//! seed_i = fmix64(master ^ fmix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `fmix64` is the SplitMix64 output finalizer. The derivation depends
//! only on `(master, i)`, so results do not depend on how replicates are
//! scheduled across threads.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Name recorded in output metadata.
pub const GENERATOR: &str = "xoshiro256++/splitmix64-seeded";

/// Mixing function used for stream derivation.
pub const SEED_MIXER: &str = "fmix64(master ^ fmix64(index + 0x9E3779B97F4A7C15))";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub type Stream = Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
#[inline]
pub fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed of replicate `index` under `master`.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fmix64(master ^ fmix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Stable 64-bit tag for a named sub-experiment (FNV-1a).
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of a named sub-experiment (e.g. one verification check).
pub fn sub_seed(master: u64, name: &str) -> u64 {
    derive_seed(master, tag(name))
}

pub fn stream(seed: u64) -> Stream {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Maps 52 random bits onto the grid `{k / 2^52}` in `[0, 1)`.
///
/// Built by filling the mantissa of a double in `[1, 2)`; the result is exact
/// and never equals 1.
#[inline(always)]
pub fn unit_f64(bits: u64) -> f64 {
    f64::from_bits((bits >> 12) | 0x3FF0_0000_0000_0000) - 1.0
}

#[inline(always)]
pub fn next_unit(rng: &mut Stream) -> f64 {
    unit_f64(rng.next_u64())
}
