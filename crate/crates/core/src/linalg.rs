//! Dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Diagonal loading applied before every covariance inversion.
pub const DIAGONAL_LOADING: f64 = 1e-10;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn vector_finite(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Replaces `m` by `(m + mᴴ) / 2`.
pub fn hermitianize(m: &mut CMatrix) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Solves `(C + loading·I) X = B` for Hermitian positive (semi)definite `C`.
pub fn hermitian_solve(c: &CMatrix, b: &CMatrix, loading: f64) -> Result<CMatrix> {
    if c.nrows() != c.ncols() || c.nrows() != b.nrows() {
        return Err(Error::dims(format!(
            "solve: {}x{} system with {}x{} right-hand side",
            c.nrows(),
            c.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut loaded = c.clone();
    for i in 0..loaded.nrows() {
        loaded[(i, i)] += C64::from(loading);
    }
    match loaded.clone().cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => loaded
            .lu()
            .solve(b)
            .ok_or_else(|| Error::Singular("covariance is not invertible".into())),
    }
}

/// General square solve `A X = B` via LU.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::dims("solve: incompatible shapes"));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("matrix is singular".into()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut sym = m.clone();
    hermitianize(&mut sym);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// 2-norm condition number via singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Column-stacking `vec(·)`: `M×K` → length `MK`.
pub fn vec_columns(m: &CMatrix) -> CVector {
    CVector::from_iterator(m.len(), m.iter().copied())
}

/// Inverse of [`vec_columns`].
pub fn unvec_columns(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::dims(format!(
            "cannot reshape length {} into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(CMatrix::from_iterator(rows, cols, v.iter().copied()))
}

/// Operation tally in complex multiply-accumulates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub macs: u64,
}

impl OpCounter {
    pub fn add(&mut self, n: u64) {
        self.macs += n;
    }

    /// Cost of a dense Cholesky factorisation plus one triangular solve pair.
    pub fn cholesky_solve(&mut self, n: usize, rhs: usize) {
        let n = n as u64;
        self.macs += n * n * n / 6 + n * n * rhs as u64;
    }
}
