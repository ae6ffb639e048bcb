//! Helpers for the acceptance suite in `tests/acceptance.rs`.

use std::path::{Path, PathBuf};

use onebit_core::config::ExperimentSpec;
use onebit_core::linalg::{CMatrix, CVector, C64};
use onebit_core::rng::complex_gaussian;
use rand::Rng;

/// The shipped example configs.
pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load_config(name: &str) -> ExperimentSpec {
    ExperimentSpec::load(&configs_dir().join(name)).expect("shipped config loads")
}

pub fn random_psd(n: usize, rng: &mut impl Rng) -> CMatrix {
    let b = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    &b * b.adjoint() * C64::from(1.0 / n as f64)
}

/// Running mean and variance of the real and imaginary parts of each entry.
pub struct EntryStats {
    pub n: usize,
    sum: Vec<C64>,
    sum_sq: Vec<(f64, f64)>,
}

impl EntryStats {
    pub fn new(len: usize) -> Self {
        Self {
            n: 0,
            sum: vec![C64::new(0.0, 0.0); len],
            sum_sq: vec![(0.0, 0.0); len],
        }
    }

    /// Adds one sample of `a bᴴ`.
    pub fn push_outer(&mut self, a: &CVector, b: &CVector) {
        let dim = b.len();
        for i in 0..a.len() {
            for j in 0..dim {
                self.push(i * dim + j, a[i] * b[j].conj());
            }
        }
        self.n += 1;
    }

    fn push(&mut self, i: usize, z: C64) {
        self.sum[i] += z;
        self.sum_sq[i].0 += z.re * z.re;
        self.sum_sq[i].1 += z.im * z.im;
    }

    /// Largest |empirical − expected| / standard error over all real scalars.
    pub fn worst_z(&self, expected: &CMatrix) -> f64 {
        let n = self.n as f64;
        let dim = expected.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..dim * dim {
            let (r, c) = (i / dim, i % dim);
            let mean = self.sum[i] / n;
            let var_re = (self.sum_sq[i].0 / n - mean.re * mean.re).max(0.0);
            let var_im = (self.sum_sq[i].1 / n - mean.im * mean.im).max(0.0);
            for (diff, var) in [
                ((mean.re - expected[(r, c)].re).abs(), var_re),
                ((mean.im - expected[(r, c)].im).abs(), var_im),
            ] {
                let se = (var / n).sqrt();
                // Entries that are constant (unit diagonal of the arcsine law) have se = 0.
                let z = if se > 1e-12 {
                    diff / se
                } else if diff < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        worst
    }
}
