//! Seeded randomness. Every random draw in the crate goes through a
//! `ChaCha8Rng` built here so results are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::CMat;
use num_complex::Complex64;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sub-seed for an indexed stream: `seed` xor a splitmix64 hash of `index`
/// and a domain tag, so per-user and per-purpose draws never alias.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    seed ^ splitmix64(splitmix64(tag).wrapping_add(index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Circularly-symmetric complex Gaussian with E|z|^2 = `variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = libm::sqrt(variance / 2.0);
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    // Column-major fill keeps the draw order identical to nalgebra's storage.
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng, variance))
}

pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..core::f64::consts::TAU)
}
