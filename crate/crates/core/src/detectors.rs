//! Symbol detection on quantized observations.
//!
//! Baselines (MRC, ZF) ignore the quantizer. The low-resolution-aware (LRA)
//! detectors work on the Bussgang model `y_Q = A(Hx + n) + n_q`:
//!
//! * linear LRA-MMSE, `W = C_yQ⁻¹ C_yQx` with `C_yQx = A H D`;
//! * hard SIC, which detects the user with the largest `μ_k = w_kᴴ A h_k`,
//!   subtracts `A h_k x̌_k` and rebuilds the filter on the deflated system;
//! * soft SIC, which runs the same loop but also emits per-bit LLRs from the
//!   Gaussian approximation `x̃_k = μ_k x_k + z_k`, `Var z_k = E_k(μ_k − μ_k²)`.
//!
//! `A` and `C_nq` stay at their full-signal values in every SIC stage: the
//! quantizer acted on the complete superposition.

use serde::{Deserialize, Serialize};

use crate::channel::{qpsk_alphabet, qpsk_slice};
use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, hermitian_solve, hermitianize, vector_finite, CMatrix, CVector, C64,
    DIAGONAL_LOADING,
};
use crate::quantize::{BussgangModel, DiagonalOperator};

/// Magnitude limit applied to every LLR handed to the decoder.
pub const LLR_CLAMP: f64 = 60.0;

const MU_TOL: f64 = 1e-8;
const MU_IMAG_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    Mrc,
    Zf,
    LraMmse,
    SicHard,
    SicSoft,
}

impl Detector {
    pub const ALL: [Detector; 5] = [
        Detector::Mrc,
        Detector::Zf,
        Detector::LraMmse,
        Detector::SicHard,
        Detector::SicSoft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Mrc => "mrc",
            Detector::Zf => "zf",
            Detector::LraMmse => "lra-mmse",
            Detector::SicHard => "sic-hard",
            Detector::SicSoft => "sic-soft",
        }
    }

    /// Whether the detector produces LLRs usable by the channel decoder.
    pub fn is_soft(self) -> bool {
        matches!(self, Detector::LraMmse | Detector::SicSoft)
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::config(format!("unknown detector '{s}'")))
    }
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-stage record of a SIC run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SicTrace {
    /// Detection order `k_1, …, k_K` (0-based user indices).
    pub order: Vec<usize>,
    /// Sliced symbol of each stage.
    pub symbols: Vec<C64>,
    pub mu: Vec<f64>,
    pub eta2: Vec<f64>,
    /// Observation entering each stage; `residuals[0]` is `y_Q`.
    pub residuals: Vec<CVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutput {
    /// Hard decisions in natural user order.
    pub hard_symbols: Vec<C64>,
    /// `K×2` LLRs (`log P(b=0)/P(b=1)`), clamped to ±[`LLR_CLAMP`].
    pub llrs: Option<Vec<[f64; 2]>>,
    pub trace: Option<SicTrace>,
}

fn check_observation(y: &CVector, m: usize) -> Result<()> {
    if y.len() != m {
        return Err(Error::dims(format!(
            "observation has length {}, expected {m}",
            y.len()
        )));
    }
    if !vector_finite(y) {
        return Err(Error::invalid("observation contains NaN or Inf"));
    }
    Ok(())
}

/// Filter-bank detector `x̂ = Wᴴ y` followed by per-user QPSK slicing.
#[derive(Debug, Clone)]
pub struct LinearDetector {
    pub w: CMatrix,
    energies: Vec<f64>,
}

impl LinearDetector {
    /// Matched filter normalised per stream by `‖h_k‖²`.
    pub fn mrc(h: &CMatrix, energies: &[f64]) -> Result<Self> {
        check_channel(h)?;
        let mut w = h.clone();
        for k in 0..h.ncols() {
            let norm = h.column(k).norm_squared();
            if norm == 0.0 {
                return Err(Error::Singular(format!("user {k} has an all-zero channel")));
            }
            w.column_mut(k).unscale_mut(norm);
        }
        Ok(Self {
            w,
            energies: energies.to_vec(),
        })
    }

    /// Zero forcing, `W = H (HᴴH)⁻¹`.
    pub fn zf(h: &CMatrix, energies: &[f64]) -> Result<Self> {
        check_channel(h)?;
        let gram = h.adjoint() * h;
        let sv = gram.clone().singular_values();
        if sv.min() <= 1e-12 * sv.max() {
            return Err(Error::Singular(
                "channel is rank deficient; ZF undefined".into(),
            ));
        }
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Singular("HᴴH not invertible".into()))?;
        Ok(Self {
            w: h * inv,
            energies: energies.to_vec(),
        })
    }

    pub fn estimate(&self, y: &CVector) -> Result<CVector> {
        check_observation(y, self.w.nrows())?;
        Ok(self.w.ad_mul(y))
    }

    pub fn detect(&self, y: &CVector) -> Result<DetectionOutput> {
        let x = self.estimate(y)?;
        Ok(DetectionOutput {
            hard_symbols: x
                .iter()
                .zip(&self.energies)
                .map(|(z, e)| qpsk_slice(*z, *e))
                .collect(),
            llrs: None,
            trace: None,
        })
    }
}

fn check_channel(h: &CMatrix) -> Result<()> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::dims("channel matrix must be non-empty"));
    }
    if !all_finite(h) {
        return Err(Error::invalid("channel matrix contains NaN or Inf"));
    }
    Ok(())
}

pub fn detect_mrc(y_q: &CVector, h: &CMatrix) -> Result<DetectionOutput> {
    LinearDetector::mrc(h, &vec![1.0; h.ncols()])?.detect(y_q)
}

pub fn detect_zf(y_q: &CVector, h: &CMatrix) -> Result<DetectionOutput> {
    LinearDetector::zf(h, &vec![1.0; h.ncols()])?.detect(y_q)
}

/// Linear LRA-MMSE filter bank for one (possibly deflated) channel.
#[derive(Debug, Clone)]
pub struct LraMmseFilter {
    /// `M×K`; columns of already-cancelled users are zero.
    pub w: CMatrix,
    pub model: BussgangModel,
    pub h_eff: CMatrix,
    /// Covariance of the observation the filter is applied to.
    pub covariance: CMatrix,
}

/// Builds the Bussgang model and the LRA-MMSE filter for `H`.
pub fn build_lra_mmse(
    h: &CMatrix,
    symbol_energy: f64,
    noise_var: f64,
    per_user_energy: Option<&[f64]>,
) -> Result<LraMmseFilter> {
    let model = BussgangModel::build(h, symbol_energy, noise_var, per_user_energy)?;
    LraMmseFilter::new(model, h)
}

impl LraMmseFilter {
    /// Full-signal filter `W = C_yQ⁻¹ A H D`.
    pub fn new(model: BussgangModel, h: &CMatrix) -> Result<Self> {
        check_channel(h)?;
        if h.nrows() != model.antennas() || h.ncols() != model.energies.len() {
            return Err(Error::dims("channel does not match the Bussgang model"));
        }
        let covariance = model.c_yq.clone();
        Self::with_covariance(model, h.clone(), covariance)
    }

    /// Filter for the system with the users in `cancelled` removed:
    /// `C = A H̄ D H̄ᴴ A + σ_n² A² + C_nq`, `W = C⁻¹ A H̄ D`.
    pub fn deflated(model: &BussgangModel, h: &CMatrix, cancelled: &[bool]) -> Result<Self> {
        check_channel(h)?;
        if cancelled.len() != h.ncols() {
            return Err(Error::dims("cancellation mask length differs from K"));
        }
        let mut h_bar = h.clone();
        for (k, gone) in cancelled.iter().enumerate() {
            if *gone {
                h_bar.column_mut(k).fill(C64::new(0.0, 0.0));
            }
        }
        let m = h.nrows();
        let mut signal =
            crate::quantize::covariance_from_energies(&h_bar, &model.energies, model.noise_var);
        // covariance_from_energies added σ_n² I already; A(·)A scales it to σ_n² A².
        signal = model.a.congruence(&signal);
        let mut covariance = signal + &model.c_nq;
        hermitianize(&mut covariance);
        debug_assert_eq!(covariance.nrows(), m);
        Self::with_covariance(model.clone(), h_bar, covariance)
    }

    fn with_covariance(model: BussgangModel, h_eff: CMatrix, covariance: CMatrix) -> Result<Self> {
        let cross = cross_correlation(&model.a, &h_eff, &model.energies);
        let w = hermitian_solve(&covariance, &cross, DIAGONAL_LOADING)?;
        if !all_finite(&w) {
            return Err(Error::Numerical("LRA-MMSE filter is not finite".into()));
        }
        Ok(Self {
            w,
            model,
            h_eff,
            covariance,
        })
    }

    pub fn users(&self) -> usize {
        self.w.ncols()
    }

    /// `x̂ = Wᴴ y`.
    pub fn estimate(&self, y: &CVector) -> Result<CVector> {
        check_observation(y, self.w.nrows())?;
        Ok(self.w.ad_mul(y))
    }

    /// Raw `w_kᴴ A h_k` before any validation.
    fn raw_mu(&self, k: usize) -> C64 {
        let ah = self.model.a.apply(&self.h_eff.column(k).into_owned());
        self.w.column(k).dotc(&ah)
    }

    /// `(μ_k, η_k²)` with `μ_k = Re(w_kᴴ A h_k)` and `η_k² = E_k(μ_k − μ_k²)`.
    pub fn stream_statistics(&self, k: usize) -> Result<(f64, f64)> {
        if k >= self.users() {
            return Err(Error::invalid(format!("user {k} out of range")));
        }
        let raw = self.raw_mu(k);
        if raw.im.abs() > MU_IMAG_TOL {
            return Err(Error::Numerical(format!(
                "user {k}: imaginary part {} in w_kᴴ A h_k",
                raw.im
            )));
        }
        let mu = raw.re;
        if !(-MU_TOL..=1.0 + MU_TOL).contains(&mu) {
            return Err(Error::Numerical(format!(
                "user {k}: μ = {mu} outside [0, 1]"
            )));
        }
        let mu = mu.clamp(0.0, 1.0);
        Ok((mu, self.model.energies[k] * (mu - mu * mu)))
    }
}

fn cross_correlation(a: &DiagonalOperator, h: &CMatrix, energies: &[f64]) -> CMatrix {
    CMatrix::from_fn(h.nrows(), h.ncols(), |i, k| {
        h[(i, k)] * (a.diag()[i] * energies[k])
    })
}

/// Next user to detect: largest `μ_k` among `remaining`, lowest index on ties.
pub fn sic_order_next(filter: &LraMmseFilter, remaining: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &k in remaining {
        let (mu, _) = filter.stream_statistics(k)?;
        match best {
            Some((bk, bm)) if mu < bm || (mu == bm && k > bk) => {}
            _ => best = Some((k, mu)),
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::invalid("no users left to order"))
}

/// `y ← y − A h_k x`.
fn cancel(y: &mut CVector, a: &DiagonalOperator, h: &CMatrix, k: usize, x: C64) {
    for i in 0..y.len() {
        y[i] -= h[(i, k)] * x * a.diag()[i];
    }
}

/// `y_Q − A Σ_j h_{k_j} x̃_{k_j}` over the decided users.
pub fn soft_residual(
    y_q: &CVector,
    decided: &[(usize, C64)],
    h: &CMatrix,
    a: &DiagonalOperator,
) -> Result<CVector> {
    check_observation(y_q, h.nrows())?;
    if a.len() != h.nrows() {
        return Err(Error::dims("operator length differs from M"));
    }
    let mut seen = vec![false; h.ncols()];
    let mut y = y_q.clone();
    for &(k, x) in decided {
        if k >= h.ncols() {
            return Err(Error::invalid(format!("user {k} out of range")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::invalid(format!("user {k} cancelled twice")));
        }
        cancel(&mut y, a, h, k, x);
    }
    Ok(y)
}

/// Per-bit LLRs of one QPSK symbol under `x̃ = μx + z`, `z ~ CN(0, η²)`, with
/// uniform priors. Exact log-sum-exp over the four hypotheses.
pub fn soft_llr(x_tilde: C64, mu: f64, eta2: f64, energy: f64) -> Result<[f64; 2]> {
    if eta2.is_nan() || eta2 <= 0.0 || eta2.is_infinite() {
        return Err(Error::invalid(format!("η² must be positive, got {eta2}")));
    }
    if !(x_tilde.re.is_finite() && x_tilde.im.is_finite() && mu.is_finite()) {
        return Err(Error::invalid("LLR inputs must be finite"));
    }
    let metrics: Vec<(f64, [u8; 2])> = qpsk_alphabet(energy)
        .iter()
        .map(|(x, bits)| (-(x_tilde - x * mu).norm_sqr() / eta2, *bits))
        .collect();
    let mut out = [0.0; 2];
    for (l, llr) in out.iter_mut().enumerate() {
        let num = log_sum_exp(metrics.iter().filter(|(_, b)| b[l] == 0).map(|(m, _)| *m));
        let den = log_sum_exp(metrics.iter().filter(|(_, b)| b[l] == 1).map(|(m, _)| *m));
        *llr = num - den;
    }
    Ok(out)
}

/// Gray-QPSK closed form of [`soft_llr`]: `4 μ √(E/2) (Re x̃, Im x̃) / η²`.
pub fn soft_llr_closed_form(x_tilde: C64, mu: f64, eta2: f64, energy: f64) -> [f64; 2] {
    let scale = 4.0 * mu * (energy / 2.0).sqrt() / eta2;
    [scale * x_tilde.re, scale * x_tilde.im]
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn clamp_llr(l: [f64; 2]) -> [f64; 2] {
    [
        l[0].clamp(-LLR_CLAMP, LLR_CLAMP),
        l[1].clamp(-LLR_CLAMP, LLR_CLAMP),
    ]
}

/// Smallest noise variance used when the Gaussian approximation degenerates (`μ → 1`).
fn floor_eta2(eta2: f64, energy: f64) -> f64 {
    eta2.max(1e-12 * energy)
}

/// One precomputed SIC stage.
#[derive(Debug, Clone)]
pub struct SicStage {
    pub user: usize,
    pub w: CVector,
    pub mu: f64,
    pub eta2: f64,
}

/// The order and filters of a SIC run depend only on the channel, so they are
/// computed once per frame and reused for every symbol vector.
#[derive(Debug, Clone)]
pub struct SicPlan {
    pub stages: Vec<SicStage>,
    model: BussgangModel,
    h: CMatrix,
}

impl SicPlan {
    pub fn new(model: BussgangModel, h: &CMatrix) -> Result<Self> {
        check_channel(h)?;
        if h.nrows() != model.antennas() || h.ncols() != model.energies.len() {
            return Err(Error::dims("channel does not match the Bussgang model"));
        }
        let k = h.ncols();
        let mut cancelled = vec![false; k];
        let mut stages = Vec::with_capacity(k);
        for stage in 0..k {
            let filter = if stage == 0 {
                LraMmseFilter::new(model.clone(), h)?
            } else {
                LraMmseFilter::deflated(&model, h, &cancelled)?
            };
            let remaining: Vec<usize> = (0..k).filter(|j| !cancelled[*j]).collect();
            let user = sic_order_next(&filter, &remaining)?;
            let (mu, eta2) = filter.stream_statistics(user)?;
            stages.push(SicStage {
                user,
                w: filter.w.column(user).into_owned(),
                mu,
                eta2,
            });
            cancelled[user] = true;
        }
        Ok(Self {
            stages,
            model,
            h: h.clone(),
        })
    }

    pub fn order(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.user).collect()
    }

    fn run(&self, y_q: &CVector, soft: bool) -> Result<DetectionOutput> {
        check_observation(y_q, self.h.nrows())?;
        let k = self.h.ncols();
        let mut y = y_q.clone();
        let mut hard = vec![C64::new(0.0, 0.0); k];
        let mut llrs = vec![[0.0; 2]; k];
        let mut trace = SicTrace::default();
        for stage in &self.stages {
            let energy = self.model.energies[stage.user];
            let x_tilde = stage.w.dotc(&y);
            let symbol = qpsk_slice(x_tilde, energy);
            if soft {
                llrs[stage.user] = clamp_llr(soft_llr(
                    x_tilde,
                    stage.mu,
                    floor_eta2(stage.eta2, energy),
                    energy,
                )?);
            }
            trace.order.push(stage.user);
            trace.symbols.push(symbol);
            trace.mu.push(stage.mu);
            trace.eta2.push(stage.eta2);
            trace.residuals.push(y.clone());
            hard[stage.user] = symbol;
            cancel(&mut y, &self.model.a, &self.h, stage.user, symbol);
        }
        Ok(DetectionOutput {
            hard_symbols: hard,
            llrs: soft.then_some(llrs),
            trace: Some(trace),
        })
    }

    pub fn detect_hard(&self, y_q: &CVector) -> Result<DetectionOutput> {
        self.run(y_q, false)
    }

    pub fn detect_soft(&self, y_q: &CVector) -> Result<DetectionOutput> {
        self.run(y_q, true)
    }
}

pub fn detect_sic_hard(
    y_q: &CVector,
    h: &CMatrix,
    symbol_energy: f64,
    noise_var: f64,
    per_user_energy: Option<&[f64]>,
) -> Result<DetectionOutput> {
    let model = BussgangModel::build(h, symbol_energy, noise_var, per_user_energy)?;
    SicPlan::new(model, h)?.detect_hard(y_q)
}

pub fn detect_sic_soft(
    y_q: &CVector,
    h: &CMatrix,
    symbol_energy: f64,
    noise_var: f64,
    per_user_energy: Option<&[f64]>,
) -> Result<DetectionOutput> {
    let model = BussgangModel::build(h, symbol_energy, noise_var, per_user_energy)?;
    SicPlan::new(model, h)?.detect_soft(y_q)
}

/// Linear LRA-MMSE with precomputed per-stream statistics.
#[derive(Debug, Clone)]
pub struct LinearMmse {
    pub filter: LraMmseFilter,
    stats: Vec<(f64, f64)>,
}

impl LinearMmse {
    pub fn new(filter: LraMmseFilter) -> Result<Self> {
        let stats = (0..filter.users())
            .map(|k| filter.stream_statistics(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { filter, stats })
    }

    pub fn detect(&self, y_q: &CVector) -> Result<DetectionOutput> {
        let x = self.filter.estimate(y_q)?;
        let energies = &self.filter.model.energies;
        let mut llrs = Vec::with_capacity(x.len());
        for (k, z) in x.iter().enumerate() {
            let (mu, eta2) = self.stats[k];
            llrs.push(clamp_llr(soft_llr(
                *z,
                mu,
                floor_eta2(eta2, energies[k]),
                energies[k],
            )?));
        }
        Ok(DetectionOutput {
            hard_symbols: x
                .iter()
                .zip(energies)
                .map(|(z, e)| qpsk_slice(*z, *e))
                .collect(),
            llrs: Some(llrs),
            trace: None,
        })
    }
}

/// A detector specialised to one channel realization.
#[derive(Debug, Clone)]
pub enum PreparedDetector {
    Linear(LinearDetector),
    Mmse(LinearMmse),
    Sic { plan: SicPlan, soft: bool },
}

impl PreparedDetector {
    /// `model` must describe `h` (as returned by [`BussgangModel::build`] or
    /// [`BussgangModel::unquantized`]).
    pub fn new(detector: Detector, h: &CMatrix, model: BussgangModel) -> Result<Self> {
        Ok(match detector {
            Detector::Mrc => PreparedDetector::Linear(LinearDetector::mrc(h, &model.energies)?),
            Detector::Zf => PreparedDetector::Linear(LinearDetector::zf(h, &model.energies)?),
            Detector::LraMmse => {
                PreparedDetector::Mmse(LinearMmse::new(LraMmseFilter::new(model, h)?)?)
            }
            Detector::SicHard => PreparedDetector::Sic {
                plan: SicPlan::new(model, h)?,
                soft: false,
            },
            Detector::SicSoft => PreparedDetector::Sic {
                plan: SicPlan::new(model, h)?,
                soft: true,
            },
        })
    }

    pub fn detect(&self, y_q: &CVector) -> Result<DetectionOutput> {
        match self {
            PreparedDetector::Linear(d) => d.detect(y_q),
            PreparedDetector::Mmse(d) => d.detect(y_q),
            PreparedDetector::Sic { plan, soft } => plan.run(y_q, *soft),
        }
    }
}
