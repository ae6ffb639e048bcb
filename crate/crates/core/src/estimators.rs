//! Channel estimation from quantized pilot blocks.
//!
//! Three estimators are provided:
//!
//! * [`estimate_ls`]: least squares that treats `Y_Q` as if it were unquantized.
//! * [`estimate_blmmse`]: Bussgang LMMSE on the stacked `Mτ`-dimensional pilot
//!   observation (cubic in `Mτ`).
//! * [`RlsState`]: the low-resolution-aware RLS estimator. Each antenna solves
//!
//!   ```text
//!   min_h Σ_n λ^{τ−n} |y_Qᵐ(n) − hᴴ u(n)|² + δ λ^τ ‖h‖²,   u(n) = A_p(n) x_p(n)
//!   ```
//!
//!   recursively. The regressor `u(n)` does not depend on the antenna, so the
//!   inverse correlation matrix `P` and the gain vector are shared by all `M`
//!   antennas and each pilot costs `O(K² + MK)`.

use std::f64::consts::FRAC_2_PI;

use serde::{Deserialize, Serialize};

use crate::channel::FrontEnd;
use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, frobenius_sq, hermitian_solve, hermitianize, vector_finite, CMatrix, CVector,
    OpCounter, C64, DIAGONAL_LOADING,
};
use crate::quantize::arcsine_covariance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    PerfectCsi,
    Ls,
    Blmmse,
    LraRls,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::PerfectCsi,
        Estimator::Ls,
        Estimator::Blmmse,
        Estimator::LraRls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::PerfectCsi => "perfect-csi",
            Estimator::Ls => "ls",
            Estimator::Blmmse => "blmmse",
            Estimator::LraRls => "lra-rls",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config(format!("unknown estimator '{s}'")))
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A channel estimate together with the work it took.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub h_hat: CMatrix,
    pub ops: OpCounter,
}

#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub h_hat: CMatrix,
    pub nmse: f64,
    pub flop_estimate: u64,
}

impl EstimatorReport {
    pub fn new(estimate: Estimate, h_true: &CMatrix) -> Result<Self> {
        let nmse = nmse(&estimate.h_hat, h_true)?;
        Ok(Self {
            h_hat: estimate.h_hat,
            nmse,
            flop_estimate: estimate.ops.macs,
        })
    }
}

/// `‖Ĥ − H‖²_F / ‖H‖²_F`.
pub fn nmse(h_hat: &CMatrix, h: &CMatrix) -> Result<f64> {
    if h_hat.shape() != h.shape() {
        return Err(Error::dims(format!(
            "estimate is {:?}, channel is {:?}",
            h_hat.shape(),
            h.shape()
        )));
    }
    let energy = frobenius_sq(h);
    if energy == 0.0 {
        return Err(Error::invalid("NMSE undefined for an all-zero channel"));
    }
    Ok(frobenius_sq(&(h_hat - h)) / energy)
}

/// Scalar Bussgang gain of one pilot instant,
/// `A_p(n) = √(2/π) (x_pᴴ x_p + σ_n²)^{-1/2}`.
pub fn pilot_linear_operator(x_p: &CVector, noise_var: f64) -> Result<f64> {
    if !vector_finite(x_p) || !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid("pilot operator inputs must be finite"));
    }
    let power = x_p.norm_squared() + noise_var;
    if power <= 0.0 {
        return Err(Error::DegenerateCovariance(
            "zero pilot vector with zero noise".into(),
        ));
    }
    Ok((FRAC_2_PI / power).sqrt())
}

/// Recursive state of the LRA-RLS estimator for all `M` antennas.
///
/// The weighted, regularised correlation `R(n) = λR(n−1) + u uᴴ`,
/// `R(0) = δI`, is carried as an upper-triangular factor `S` with `SᴴS = R`
/// and updated by Givens rotations. Each antenna keeps `z_m = S⁻ᴴ p_m`, where
/// `p_m` is its weighted cross-correlation, so `S ĥᵐ = z_m`. The classical
/// inverse correlation matrix `P = R⁻¹` is recovered on demand by [`RlsState::p`].
#[derive(Debug, Clone)]
pub struct RlsState {
    /// Upper-triangular `K×K` factor with real positive diagonal.
    factor: CMatrix,
    /// `K×M`, column `m` is `z_m`.
    rotated: CMatrix,
    pub forgetting: f64,
    pub delta: f64,
    pub samples: usize,
    pub ops: OpCounter,
}

impl RlsState {
    pub fn new(antennas: usize, users: usize, forgetting: f64, delta: f64) -> Result<Self> {
        if antennas == 0 || users == 0 {
            return Err(Error::dims("RLS needs M, K >= 1"));
        }
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::invalid(format!(
                "forgetting factor {forgetting} outside (0, 1]"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!(
                "regularization {delta} must be positive"
            )));
        }
        Ok(Self {
            factor: CMatrix::identity(users, users) * C64::from(delta.sqrt()),
            rotated: CMatrix::zeros(users, antennas),
            forgetting,
            delta,
            samples: 0,
            ops: OpCounter::default(),
        })
    }

    pub fn antennas(&self) -> usize {
        self.rotated.ncols()
    }

    pub fn users(&self) -> usize {
        self.factor.nrows()
    }

    /// Inverse correlation matrix `P(n) = R(n)⁻¹`.
    pub fn p(&self) -> CMatrix {
        let k = self.users();
        let s_inv = self
            .factor
            .solve_upper_triangular(&CMatrix::identity(k, k))
            .expect("triangular factor has a positive diagonal");
        let mut p = &s_inv * s_inv.adjoint();
        hermitianize(&mut p);
        p
    }

    /// RLS gain `g = P u / (λ + uᴴ P u)` for the next regressor.
    pub fn gain(&self, u: &CVector) -> CVector {
        let pu = self.p() * u;
        let denom = self.forgetting + u.dotc(&pu).re;
        pu / C64::from(denom)
    }

    /// Current channel estimate `Ĥ` (`M×K`).
    pub fn channel_estimate(&self) -> CMatrix {
        let coeffs = self
            .factor
            .solve_upper_triangular(&self.rotated)
            .expect("triangular factor has a positive diagonal");
        // column m of `coeffs` is ĥᵐ; H[m, k] = conj(ĥᵐ[k])
        coeffs.adjoint()
    }

    /// One quantization-aware update with pilot vector `x_p(n)` and received
    /// column `y_Q(n)`.
    pub fn update(&mut self, x_p: &CVector, y_q: &CVector, noise_var: f64) -> Result<()> {
        let a_p = pilot_linear_operator(x_p, noise_var)?;
        let u = x_p * C64::from(a_p);
        self.update_with_regressor(&u, y_q)
    }

    /// Exponentially weighted RLS step for the model `y = hᴴ u` on every antenna.
    pub fn update_with_regressor(&mut self, u: &CVector, y: &CVector) -> Result<()> {
        let k = self.users();
        let m = self.antennas();
        if u.len() != k || y.len() != m {
            return Err(Error::dims(format!(
                "RLS update expects u of length {k} and y of length {m}, got {} and {}",
                u.len(),
                y.len()
            )));
        }
        if !vector_finite(u) || !vector_finite(y) {
            return Err(Error::invalid("RLS update received non-finite data"));
        }

        let root = C64::from(self.forgetting.sqrt());
        self.factor *= root;
        self.rotated *= root;

        // Annihilate the appended row [uᴴ | y*ᵀ] against the factor.
        let mut row: Vec<C64> = u.iter().map(|z| z.conj()).collect();
        let mut rhs: Vec<C64> = y.iter().map(|z| z.conj()).collect();
        for j in 0..k {
            let a = self.factor[(j, j)].re;
            let b = row[j];
            let r = a.hypot(b.norm());
            if r == 0.0 {
                continue;
            }
            let c = a / r;
            let s = b / r;
            #[allow(clippy::needless_range_loop)]
            for col in j..k {
                let top = self.factor[(j, col)];
                let bottom = row[col];
                self.factor[(j, col)] = top * c + s.conj() * bottom;
                row[col] = bottom * c - s * top;
            }
            self.factor[(j, j)] = C64::from(r);
            for (ant, z) in rhs.iter_mut().enumerate() {
                let top = self.rotated[(j, ant)];
                let bottom = *z;
                self.rotated[(j, ant)] = top * c + s.conj() * bottom;
                *z = bottom * c - s * top;
            }
        }
        self.samples += 1;

        let (k, m) = (k as u64, m as u64);
        // scaling, then K Givens rotations over the factor row and all M right-hand sides
        self.ops
            .add(k * (k + 1) / 2 + k * m + 2 * k * (k + 1) + 4 * k * m);
        Ok(())
    }
}

/// Runs LRA-RLS over a whole pilot block (`Y_Q` is `M×τ`, `X_p` is `K×τ`).
pub fn estimate_lra_rls(
    y_pilot: &CMatrix,
    pilots: &CMatrix,
    noise_var: f64,
    forgetting: f64,
    delta: f64,
    front_end: FrontEnd,
) -> Result<Estimate> {
    check_pilot_shapes(y_pilot, pilots)?;
    let mut state = RlsState::new(y_pilot.nrows(), pilots.nrows(), forgetting, delta)?;
    for t in 0..pilots.ncols() {
        let x = pilots.column(t).into_owned();
        let y = y_pilot.column(t).into_owned();
        match front_end {
            FrontEnd::OneBit => state.update(&x, &y, noise_var)?,
            FrontEnd::Unquantized => state.update_with_regressor(&x, &y)?,
        }
    }
    let h_hat = state.channel_estimate();
    let mut ops = state.ops;
    let (k, m) = (pilots.nrows() as u64, y_pilot.nrows() as u64);
    ops.add(k * k * m / 2);
    Ok(Estimate { h_hat, ops })
}

fn check_pilot_shapes(y_pilot: &CMatrix, pilots: &CMatrix) -> Result<()> {
    if y_pilot.ncols() != pilots.ncols() || y_pilot.nrows() == 0 || pilots.nrows() == 0 {
        return Err(Error::dims(format!(
            "pilot block is {}x{} but pilots are {}x{}",
            y_pilot.nrows(),
            y_pilot.ncols(),
            pilots.nrows(),
            pilots.ncols()
        )));
    }
    if !all_finite(y_pilot) || !all_finite(pilots) {
        return Err(Error::invalid("pilot data contains NaN or Inf"));
    }
    Ok(())
}

/// Least squares on the quantized pilots: `Ĥ = Y_Q X_pᴴ (X_p X_pᴴ)^{-1}`.
pub fn estimate_ls(y_pilot: &CMatrix, pilots: &CMatrix) -> Result<Estimate> {
    check_pilot_shapes(y_pilot, pilots)?;
    let gram = pilots * pilots.adjoint();
    let sv = gram.clone().singular_values();
    let max = sv.max();
    if sv.min() <= 1e-12 * max {
        return Err(Error::Singular(
            "pilot matrix is rank deficient; LS estimate undefined".into(),
        ));
    }
    let rhs = pilots * y_pilot.adjoint();
    let h_hat_h = crate::linalg::solve(&gram, &rhs)?;
    let (k, tau, m) = (
        pilots.nrows() as u64,
        pilots.ncols() as u64,
        y_pilot.nrows() as u64,
    );
    let mut ops = OpCounter::default();
    ops.add(k * k * tau + k * m * tau + k * k * k / 3 + k * k * m);
    Ok(Estimate {
        h_hat: h_hat_h.adjoint(),
        ops,
    })
}

/// Bussgang LMMSE estimate with `CN(0, I)` channel prior on the stacked
/// observation `vec(Y_Q) = Ã (X̃ vec(H) + vec(N)) + n_q`, `X̃ = X_pᵀ ⊗ I_M`.
pub fn estimate_blmmse(
    y_pilot: &CMatrix,
    pilots: &CMatrix,
    noise_var: f64,
    front_end: FrontEnd,
) -> Result<Estimate> {
    check_pilot_shapes(y_pilot, pilots)?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!(
            "noise variance {noise_var} is invalid"
        )));
    }
    let m = y_pilot.nrows();
    let k = pilots.nrows();
    let tau = pilots.ncols();
    let n = m * tau;
    let mut ops = OpCounter::default();

    // Gram of the pilot columns: G[t, t'] = Σ_k x_k(t) x_k(t')*.
    let gram = pilots.transpose() * pilots.map(|z| z.conj());
    ops.add((tau * tau * k) as u64);

    // C_yp = X̃ X̃ᴴ + σ_n² I with stacked index (t, m) ↦ t·M + m.
    let mut c_yp = CMatrix::zeros(n, n);
    for t2 in 0..tau {
        for t1 in 0..tau {
            let g = gram[(t1, t2)];
            for ant in 0..m {
                c_yp[(t1 * m + ant, t2 * m + ant)] = g;
            }
        }
    }
    for i in 0..n {
        c_yp[(i, i)] += C64::from(noise_var);
    }
    ops.add((n * n) as u64);

    let y_stacked = crate::linalg::vec_columns(y_pilot);
    let (a_tilde, c_yqp) = match front_end {
        FrontEnd::OneBit => {
            let a = crate::quantize::bussgang_operator(&c_yp)?;
            let c = arcsine_covariance(&c_yp)?;
            ops.add((n * n) as u64);
            (a.diag().clone(), c)
        }
        FrontEnd::Unquantized => (nalgebra::DVector::from_element(n, 1.0), c_yp),
    };

    let rhs = CMatrix::from_column_slice(n, 1, y_stacked.as_slice());
    let z = hermitian_solve(&c_yqp, &rhs, DIAGONAL_LOADING)?;
    ops.cholesky_solve(n, 1);

    // vec(Ĥ) = X̃ᴴ Ãᴴ z: Ĥ[m, k] = Σ_t x_k(t)* Ã_(t,m) z_(t,m)
    let mut h_hat = CMatrix::zeros(m, k);
    for user in 0..k {
        for t in 0..tau {
            let xc = pilots[(user, t)].conj();
            for ant in 0..m {
                let idx = t * m + ant;
                h_hat[(ant, user)] += xc * z[(idx, 0)] * a_tilde[idx];
            }
        }
    }
    ops.add((m * k * tau) as u64);
    if !all_finite(&h_hat) {
        return Err(Error::Numerical(
            "BLMMSE produced non-finite estimate".into(),
        ));
    }
    Ok(Estimate { h_hat, ops })
}

/// Log-linear regularization schedule between `delta_min` at the lowest sweep
/// point and `delta_max` at the highest.
pub fn delta_schedule(points_db: &[f64], delta_min: f64, delta_max: f64) -> Vec<f64> {
    let lo = points_db.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = points_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    points_db
        .iter()
        .map(|&p| {
            if hi <= lo {
                return delta_max;
            }
            let frac = (p - lo) / (hi - lo);
            10f64.powf(delta_min.log10() + frac * (delta_max.log10() - delta_min.log10()))
        })
        .collect()
}
