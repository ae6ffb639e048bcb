//! Seeded random streams.
//!
//! Every trial draws from its own ChaCha stream keyed by
//! `(base_seed, point index, trial index)`, so results do not depend on
//! execution order or on how many workers share the load.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::C64;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of a substream from a base seed and a path of indices.
pub fn derive_seed(base_seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base_seed), |acc, &i| {
        splitmix64(acc ^ splitmix64(i))
    })
}

pub fn substream(base_seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base_seed, path))
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}
