//! Seed splitting.
//!
//! Every random number flows from one top-level `u64` seed. Replicate `r` of an
//! experiment draws from ChaCha20 seeded by `seed` on stream `r`, so replicates can
//! be evaluated in any order or on any number of workers. Sub-seeds for
//! components that own their generator (the Langevin trainer) are derived with
//! [`mix`], a SplitMix64 finalizer over `(seed, tag)`.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal, StandardUniform};

pub use rand_chacha::ChaCha20Rng as Rng;

/// Generator for replicate `replicate` of an experiment seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// SplitMix64 mix of a seed with a tag; used to derive independent internal seeds.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw.
pub fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw on `[0, 1)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardUniform.sample(rng)
}
