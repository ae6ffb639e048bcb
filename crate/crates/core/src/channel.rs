//! Block-fading uplink frames: channel draws, QPSK, pilots and the quantized
//! receive blocks.
//!
//! SNR convention used throughout: `SNR = K·σ_x²/σ_n²` per receive antenna
//! (unit-variance channel entries). For coded runs
//! `E_b/N_0 = SNR / (M_c·R)` with `M_c = 2` bits per QPSK symbol.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::quantize::{quantize_block, user_energies};
use crate::rng::complex_gaussian;

/// Bits carried by one QPSK symbol.
pub const BITS_PER_SYMBOL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PilotMode {
    #[default]
    Orthogonal,
    Random,
}

/// What the receiver front end does with `y = Hx + n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrontEnd {
    #[default]
    OneBit,
    /// Ideal ADCs; used by sanity checks on the linear model.
    Unquantized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub antennas: usize,
    pub users: usize,
    pub pilot_len: usize,
    pub data_len: usize,
    pub symbol_energy: f64,
    pub noise_var: f64,
    pub per_user_energy: Option<Vec<f64>>,
    pub pilot_mode: PilotMode,
    pub front_end: FrontEnd,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.antennas < self.users {
            return Err(Error::invalid(format!(
                "need M >= K >= 1, got M={} K={}",
                self.antennas, self.users
            )));
        }
        if self.pilot_len == 0 {
            return Err(Error::invalid("pilot length must be at least 1"));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance {} is invalid",
                self.noise_var
            )));
        }
        user_energies(
            self.users,
            self.symbol_energy,
            self.per_user_energy.as_deref(),
        )?;
        Ok(())
    }

    pub fn energies(&self) -> Result<Vec<f64>> {
        user_energies(
            self.users,
            self.symbol_energy,
            self.per_user_energy.as_deref(),
        )
    }
}

/// One block-fading frame as seen by the receiver plus the ground truth.
#[derive(Debug, Clone)]
pub struct UplinkFrame {
    pub channel: CMatrix,
    /// `K×τ`, row k holds user k's pilots.
    pub pilots: CMatrix,
    /// `K×data_len` transmitted data symbols.
    pub data: CMatrix,
    pub y_pilot: CMatrix,
    pub y_data: CMatrix,
    /// Per-user payload bits, `2·data_len` each.
    pub payload_bits: Vec<Vec<u8>>,
}

/// I.i.d. `CN(0, 1)` channel matrix.
pub fn generate_channel<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Result<CMatrix> {
    if m == 0 || k == 0 {
        return Err(Error::dims("channel dimensions must be positive"));
    }
    let mut h = CMatrix::zeros(m, k);
    for col in 0..k {
        for row in 0..m {
            h[(row, col)] = complex_gaussian(rng, 1.0);
        }
    }
    Ok(h)
}

/// Gray mapping `(b_I, b_Q) → √σ_x² (1−2b_I + j(1−2b_Q))/√2`.
pub fn qpsk_symbol(b_i: u8, b_q: u8, energy: f64) -> C64 {
    let a = (energy / 2.0).sqrt();
    C64::new(if b_i == 0 { a } else { -a }, if b_q == 0 { a } else { -a })
}

pub fn qpsk_modulate(bits: &[u8], energy: f64) -> Result<Vec<C64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "QPSK needs an even number of bits, got {}",
            bits.len()
        )));
    }
    if let Some(b) = bits.iter().find(|b| **b > 1) {
        return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| qpsk_symbol(p[0], p[1], energy))
        .collect())
}

pub fn qpsk_hard_demap(symbols: &[C64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|z| [(z.re < 0.0) as u8, (z.im < 0.0) as u8])
        .collect()
}

/// Nearest point of the QPSK alphabet with energy `energy`.
pub fn qpsk_slice(z: C64, energy: f64) -> C64 {
    qpsk_symbol((z.re < 0.0) as u8, (z.im < 0.0) as u8, energy)
}

/// All four QPSK points with their Gray labels.
pub fn qpsk_alphabet(energy: f64) -> [(C64, [u8; 2]); 4] {
    [
        (qpsk_symbol(0, 0, energy), [0, 0]),
        (qpsk_symbol(0, 1, energy), [0, 1]),
        (qpsk_symbol(1, 0, energy), [1, 0]),
        (qpsk_symbol(1, 1, energy), [1, 1]),
    ]
}

fn sylvester_hadamard(n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let size = h.len();
        let mut next = vec![vec![0.0; 2 * size]; 2 * size];
        for i in 0..size {
            for j in 0..size {
                next[i][j] = h[i][j];
                next[i][j + size] = h[i][j];
                next[i + size][j] = h[i][j];
                next[i + size][j + size] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// `K×τ` pilot matrix with QPSK-alphabet entries.
///
/// Orthogonal pilots are rows of a Sylvester Hadamard matrix rotated onto the
/// QPSK diagonal, so `X_p X_pᴴ = τ σ_x² I_K`.
pub fn generate_pilots<R: Rng + ?Sized>(
    k: usize,
    tau: usize,
    energy: f64,
    mode: PilotMode,
    rng: &mut R,
) -> Result<CMatrix> {
    if k == 0 || tau == 0 {
        return Err(Error::dims("pilot dimensions must be positive"));
    }
    match mode {
        PilotMode::Orthogonal => {
            if tau < k || !tau.is_power_of_two() {
                return Err(Error::invalid(format!(
                    "orthogonal pilots need a power-of-two length >= K, got tau={tau} K={k}"
                )));
            }
            let had = sylvester_hadamard(tau);
            let phase = C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2) * energy.sqrt();
            Ok(CMatrix::from_fn(k, tau, |i, t| phase * had[i][t]))
        }
        PilotMode::Random => Ok(CMatrix::from_fn(k, tau, |_, _| {
            let b_i = rng.random::<bool>() as u8;
            let b_q = rng.random::<bool>() as u8;
            qpsk_symbol(b_i, b_q, energy)
        })),
    }
}

/// Picks orthogonal pilots when the length admits them, random otherwise.
pub fn default_pilot_mode(k: usize, tau: usize) -> PilotMode {
    if tau >= k && tau.is_power_of_two() {
        PilotMode::Orthogonal
    } else {
        PilotMode::Random
    }
}

fn receive<R: Rng + ?Sized>(
    h: &CMatrix,
    x: &CMatrix,
    noise_var: f64,
    front_end: FrontEnd,
    rng: &mut R,
) -> Result<CMatrix> {
    let mut y = h * x;
    for col in 0..y.ncols() {
        for row in 0..y.nrows() {
            y[(row, col)] += complex_gaussian(rng, noise_var);
        }
    }
    match front_end {
        FrontEnd::OneBit => quantize_block(&y),
        FrontEnd::Unquantized => Ok(y),
    }
}

/// Generates a frame with uniformly random payload bits.
pub fn transmit<R: Rng + ?Sized>(cfg: &FrameConfig, rng: &mut R) -> Result<UplinkFrame> {
    cfg.validate()?;
    let h = generate_channel(cfg.antennas, cfg.users, rng)?;
    let pilots = generate_pilots(cfg.users, cfg.pilot_len, 1.0, cfg.pilot_mode, rng)?;
    let bits: Vec<Vec<u8>> = (0..cfg.users)
        .map(|_| {
            (0..cfg.data_len * BITS_PER_SYMBOL)
                .map(|_| rng.random::<bool>() as u8)
                .collect()
        })
        .collect();
    finish_frame(cfg, h, pilots, bits, rng)
}

/// Generates a frame carrying the given per-user payload bits.
pub fn transmit_payload<R: Rng + ?Sized>(
    cfg: &FrameConfig,
    payload_bits: Vec<Vec<u8>>,
    rng: &mut R,
) -> Result<UplinkFrame> {
    cfg.validate()?;
    if payload_bits.len() != cfg.users
        || payload_bits
            .iter()
            .any(|b| b.len() != cfg.data_len * BITS_PER_SYMBOL)
    {
        return Err(Error::dims(format!(
            "payload must be {} users x {} bits",
            cfg.users,
            cfg.data_len * BITS_PER_SYMBOL
        )));
    }
    let h = generate_channel(cfg.antennas, cfg.users, rng)?;
    let pilots = generate_pilots(cfg.users, cfg.pilot_len, 1.0, cfg.pilot_mode, rng)?;
    finish_frame(cfg, h, pilots, payload_bits, rng)
}

fn finish_frame<R: Rng + ?Sized>(
    cfg: &FrameConfig,
    h: CMatrix,
    unit_pilots: CMatrix,
    bits: Vec<Vec<u8>>,
    rng: &mut R,
) -> Result<UplinkFrame> {
    let energies = cfg.energies()?;
    let pilots = CMatrix::from_fn(cfg.users, cfg.pilot_len, |k, t| {
        unit_pilots[(k, t)] * energies[k].sqrt()
    });
    let mut data = CMatrix::zeros(cfg.users, cfg.data_len);
    for (k, user_bits) in bits.iter().enumerate() {
        for (t, s) in qpsk_modulate(user_bits, energies[k])?
            .into_iter()
            .enumerate()
        {
            data[(k, t)] = s;
        }
    }
    let y_pilot = receive(&h, &pilots, cfg.noise_var, cfg.front_end, rng)?;
    let y_data = receive(&h, &data, cfg.noise_var, cfg.front_end, rng)?;
    Ok(UplinkFrame {
        channel: h,
        pilots,
        data,
        y_pilot,
        y_data,
        payload_bits: bits,
    })
}

/// `σ_n²` for a given SNR in dB under the convention `SNR = K σ_x² / σ_n²`.
pub fn noise_var_for_snr_db(snr_db: f64, users: usize, symbol_energy: f64) -> f64 {
    users as f64 * symbol_energy / 10f64.powf(snr_db / 10.0)
}

/// SNR in dB corresponding to `E_b/N_0` for QPSK at code rate `rate`.
pub fn snr_db_for_ebn0_db(ebn0_db: f64, rate: f64) -> f64 {
    ebn0_db + 10.0 * (BITS_PER_SYMBOL as f64 * rate).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, condition_number, frobenius_sq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FrameConfig {
        FrameConfig {
            antennas: 4,
            users: 2,
            pilot_len: 4,
            data_len: 8,
            symbol_energy: 1.0,
            noise_var: 0.1,
            per_user_energy: None,
            pilot_mode: PilotMode::Orthogonal,
            front_end: FrontEnd::OneBit,
        }
    }

    #[test]
    fn channel_shape_and_determinism() {
        let h = generate_channel(4, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(h.shape(), (4, 2));
        let again = generate_channel(4, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(h, again);
    }

    #[test]
    fn channel_unit_average_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| frobenius_sq(&generate_channel(4, 2, &mut rng).unwrap()) / 8.0)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
    }

    #[test]
    fn qpsk_convention() {
        let s = qpsk_modulate(&[0, 0], 1.0).unwrap();
        assert!((s[0] - c64(FRAC_1_SQRT_2, FRAC_1_SQRT_2)).norm() < 1e-15);
        for pattern in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let sym = qpsk_modulate(&pattern, 2.5).unwrap();
            assert!((sym[0].norm_sqr() - 2.5).abs() < 1e-12);
            assert_eq!(qpsk_hard_demap(&sym), pattern.to_vec());
        }
        assert!(qpsk_modulate(&[0, 1, 1], 1.0).is_err());
    }

    #[test]
    fn orthogonal_pilots() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = generate_pilots(2, 4, 1.5, PilotMode::Orthogonal, &mut rng).unwrap();
        let g = &x * x.adjoint();
        let expect = CMatrix::identity(2, 2) * c64(6.0, 0.0);
        assert!((g - expect).iter().all(|z| z.norm() < 1e-12));
        assert!(generate_pilots(4, 3, 1.0, PilotMode::Orthogonal, &mut rng).is_err());
        assert!(generate_pilots(2, 6, 1.0, PilotMode::Orthogonal, &mut rng).is_err());
    }

    #[test]
    fn random_pilots_are_qpsk_and_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = generate_pilots(8, 8, 1.0, PilotMode::Random, &mut rng).unwrap();
        for z in x.iter() {
            assert!((z.norm_sqr() - 1.0).abs() < 1e-12);
        }
        let kappa = condition_number(&x);
        log::debug!("random 8x8 pilot condition number {kappa}");
        assert!(kappa.is_finite());
    }

    #[test]
    fn noiseless_single_antenna() {
        let mut c = cfg();
        c.antennas = 1;
        c.users = 1;
        c.pilot_len = 1;
        c.noise_var = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = transmit(&c, &mut rng).unwrap();
        // y_Q equals the quantized noiseless product
        for t in 0..c.data_len {
            let y = f.channel[(0, 0)] * f.data[(0, t)];
            assert_eq!(f.y_data[(0, t)], crate::quantize::quantize_sample(y));
        }
    }

    #[test]
    fn outputs_in_quantized_alphabet_and_deterministic() {
        let c = cfg();
        let f = transmit(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for z in f.y_pilot.iter().chain(f.y_data.iter()) {
            assert!((z.re.abs() - FRAC_1_SQRT_2).abs() < 1e-15);
            assert!((z.im.abs() - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        let g = transmit(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(f.y_data, g.y_data);
        assert_eq!(f.payload_bits, g.payload_bits);
        assert_eq!(f.channel, g.channel);
    }

    #[test]
    fn per_antenna_power_matches_model() {
        let mut c = cfg();
        c.front_end = FrontEnd::Unquantized;
        c.noise_var = 0.5;
        c.per_user_energy = Some(vec![2.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = transmit(&c, &mut rng).unwrap();
        // E|y_m|² = Σ_k E_k |h_mk|² + σ_n² for the fixed channel of one frame,
        // estimated over a long data block.
        let mut long = c.clone();
        long.data_len = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lf = transmit(&long, &mut rng).unwrap();
        assert_eq!(lf.channel, f.channel);
        for m in 0..c.antennas {
            let expected: f64 = (0..2)
                .map(|k| c.per_user_energy.as_ref().unwrap()[k] * lf.channel[(m, k)].norm_sqr())
                .sum::<f64>()
                + 0.5;
            let emp: f64 =
                lf.y_data.row(m).iter().map(|z| z.norm_sqr()).sum::<f64>() / long.data_len as f64;
            assert!(
                (emp - expected).abs() < 0.02 * expected,
                "antenna {m}: {emp} vs {expected}"
            );
        }
    }

    #[test]
    fn snr_conventions() {
        assert!((noise_var_for_snr_db(0.0, 4, 1.0) - 4.0).abs() < 1e-12);
        assert!((noise_var_for_snr_db(10.0, 4, 1.0) - 0.4).abs() < 1e-12);
        // rate 1/2 QPSK: Eb/N0 equals SNR
        assert!((snr_db_for_ebn0_db(3.0, 0.5) - 3.0).abs() < 1e-12);
    }
}
