//! 1-bit quantization and the second-order statistics of its output.
//!
//! The sign quantizer maps every real and imaginary rail to `±1/√2`. For a
//! zero-mean complex Gaussian input with covariance `C`, the quantized output
//! is described by
//!
//! * the Bussgang cross-correlation `E[s s_Qᴴ] = √(2/π) C diag(C)^{-1/2}`,
//! * the arcsine law for `E[s_Q s_Qᴴ]`,
//! * the equivalent linear model `y_Q = A y + n_q` with diagonal `A` and
//!   quantizer-noise covariance `C_nq = C_yQ − A C_y Aᴴ`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, hermitianize, vector_finite, CMatrix, CVector, C64};

/// Round-off slack tolerated on arcsine arguments before clamping to ±1.
pub const ASIN_CLAMP_TOL: f64 = 1e-9;

/// A vector whose entries all lie in `{(±1 ± j)/√2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector(CVector);

impl QuantizedVector {
    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_vector(self) -> CVector {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    // sgn(0) = +1
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Quantizes one complex sample.
#[inline]
pub fn quantize_sample(z: C64) -> C64 {
    C64::new(sign(z.re) * FRAC_1_SQRT_2, sign(z.im) * FRAC_1_SQRT_2)
}

pub fn quantize_1bit(v: &CVector) -> Result<QuantizedVector> {
    if !vector_finite(v) {
        return Err(Error::invalid("quantizer input contains NaN or Inf"));
    }
    Ok(QuantizedVector(v.map(quantize_sample)))
}

/// Quantizes every entry of a receive block (one column per time instant).
pub fn quantize_block(m: &CMatrix) -> Result<CMatrix> {
    if !all_finite(m) {
        return Err(Error::invalid("quantizer input contains NaN or Inf"));
    }
    Ok(m.map(quantize_sample))
}

fn check_square(c: &CMatrix, what: &str) -> Result<()> {
    if c.nrows() != c.ncols() || c.nrows() == 0 {
        return Err(Error::dims(format!(
            "{what}: expected a non-empty square matrix, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    if !all_finite(c) {
        return Err(Error::invalid(format!("{what}: non-finite entry")));
    }
    Ok(())
}

/// `diag(C)^{-1/2}` as a vector, rejecting non-positive diagonals.
fn inverse_sqrt_diagonal(c: &CMatrix) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(c.nrows());
    for i in 0..c.nrows() {
        let d = c[(i, i)].re;
        if d <= 0.0 {
            return Err(Error::DegenerateCovariance(format!(
                "diagonal entry {i} is {d}"
            )));
        }
        out[i] = d.sqrt().recip();
    }
    Ok(out)
}

fn clamped_asin(x: f64) -> Result<f64> {
    if x.abs() > 1.0 + ASIN_CLAMP_TOL {
        return Err(Error::InvalidCovariance(format!(
            "normalized correlation {x} outside [-1, 1]"
        )));
    }
    Ok(x.clamp(-1.0, 1.0).asin())
}

/// Covariance of the 1-bit quantized version of a zero-mean complex Gaussian
/// vector with covariance `c_s` (arcsine law).
pub fn arcsine_covariance(c_s: &CMatrix) -> Result<CMatrix> {
    check_square(c_s, "arcsine_covariance")?;
    let k = inverse_sqrt_diagonal(c_s)?;
    let n = c_s.nrows();
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let scale = k[i] * k[j];
            let z = c_s[(i, j)];
            out[(i, j)] = C64::new(
                FRAC_2_PI * clamped_asin(scale * z.re)?,
                FRAC_2_PI * clamped_asin(scale * z.im)?,
            );
        }
    }
    hermitianize(&mut out);
    for i in 0..n {
        out[(i, i)] = C64::new(1.0, 0.0);
    }
    Ok(out)
}

/// Diagonal linear operator stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator(DVector<f64>);

impl DiagonalOperator {
    pub fn new(diag: DVector<f64>) -> Self {
        Self(diag)
    }

    pub fn identity(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0))
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        CVector::from_fn(v.len(), |i, _| v[i] * self.0[i])
    }

    /// `A · m` (row scaling).
    pub fn left_mul(&self, m: &CMatrix) -> CMatrix {
        CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * self.0[i])
    }

    /// `A · m · Aᴴ` for real diagonal `A`.
    pub fn congruence(&self, m: &CMatrix) -> CMatrix {
        CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            m[(i, j)] * (self.0[i] * self.0[j])
        })
    }
}

/// Bussgang gain `A = √(2/π) diag(C_y)^{-1/2}`.
pub fn bussgang_operator(c_y: &CMatrix) -> Result<DiagonalOperator> {
    check_square(c_y, "bussgang_operator")?;
    let k = inverse_sqrt_diagonal(c_y)?;
    Ok(DiagonalOperator(k * FRAC_2_PI.sqrt()))
}

/// Resolves the per-user energy matrix `D` (σ_x²·I unless overridden).
pub fn user_energies(
    users: usize,
    symbol_energy: f64,
    per_user_energy: Option<&[f64]>,
) -> Result<Vec<f64>> {
    match per_user_energy {
        None => {
            if !(symbol_energy > 0.0 && symbol_energy.is_finite()) {
                return Err(Error::invalid(format!(
                    "symbol energy must be positive, got {symbol_energy}"
                )));
            }
            Ok(vec![symbol_energy; users])
        }
        Some(e) => {
            if e.len() != users {
                return Err(Error::dims(format!(
                    "{} per-user energies for {} users",
                    e.len(),
                    users
                )));
            }
            if let Some(bad) = e.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::invalid(format!(
                    "per-user energy {bad} is not positive"
                )));
            }
            Ok(e.to_vec())
        }
    }
}

/// `C_y = H D Hᴴ + σ_n² I`.
pub fn signal_covariance(
    h: &CMatrix,
    symbol_energy: f64,
    noise_var: f64,
    per_user_energy: Option<&[f64]>,
) -> Result<CMatrix> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::dims("channel matrix must be non-empty"));
    }
    if !all_finite(h) {
        return Err(Error::invalid("channel matrix contains NaN or Inf"));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!(
            "noise variance {noise_var} is invalid"
        )));
    }
    let energies = user_energies(h.ncols(), symbol_energy, per_user_energy)?;
    Ok(covariance_from_energies(h, &energies, noise_var))
}

pub(crate) fn covariance_from_energies(h: &CMatrix, energies: &[f64], noise_var: f64) -> CMatrix {
    let m = h.nrows();
    let scaled = CMatrix::from_fn(m, h.ncols(), |i, k| h[(i, k)] * energies[k]);
    let mut c = &scaled * h.adjoint();
    for i in 0..m {
        c[(i, i)] += C64::from(noise_var);
    }
    hermitianize(&mut c);
    c
}

/// The statistically equivalent linear system `y_Q = A y + n_q` for one
/// channel realization.
#[derive(Debug, Clone)]
pub struct BussgangModel {
    pub a: DiagonalOperator,
    pub c_y: CMatrix,
    pub c_yq: CMatrix,
    pub c_nq: CMatrix,
    pub noise_var: f64,
    pub symbol_energy: f64,
    /// Diagonal of `D`; all equal to `symbol_energy` outside the near-far setting.
    pub energies: Vec<f64>,
}

impl BussgangModel {
    pub fn build(
        h: &CMatrix,
        symbol_energy: f64,
        noise_var: f64,
        per_user_energy: Option<&[f64]>,
    ) -> Result<Self> {
        let c_y = signal_covariance(h, symbol_energy, noise_var, per_user_energy)?;
        let energies = user_energies(h.ncols(), symbol_energy, per_user_energy)?;
        let c_yq = arcsine_covariance(&c_y)?;
        let a = bussgang_operator(&c_y)?;
        let mut c_nq = &c_yq - a.congruence(&c_y);
        hermitianize(&mut c_nq);
        Ok(Self {
            a,
            c_y,
            c_yq,
            c_nq,
            noise_var,
            symbol_energy,
            energies,
        })
    }

    /// Model of an ideal (infinite-resolution) receiver: `A = I`, `C_nq = 0`.
    pub fn unquantized(
        h: &CMatrix,
        symbol_energy: f64,
        noise_var: f64,
        per_user_energy: Option<&[f64]>,
    ) -> Result<Self> {
        let c_y = signal_covariance(h, symbol_energy, noise_var, per_user_energy)?;
        let energies = user_energies(h.ncols(), symbol_energy, per_user_energy)?;
        let m = h.nrows();
        Ok(Self {
            a: DiagonalOperator::identity(m),
            c_yq: c_y.clone(),
            c_y,
            c_nq: CMatrix::zeros(m, m),
            noise_var,
            symbol_energy,
            energies,
        })
    }

    pub fn antennas(&self) -> usize {
        self.a.len()
    }
}
