//! Monte-Carlo runner: sweeps an [`ExperimentSpec`] over its SNR points and
//! aggregates NMSE / BER into [`CurveRecord`]s.
//!
//! Every trial draws from the substream `(base_seed, point, trial)`. Trials of
//! one point run on a rayon pool and are reduced in trial order, so the
//! records do not depend on the number of workers.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    noise_var_for_snr_db, qpsk_hard_demap, snr_db_for_ebn0_db, transmit, transmit_payload,
    FrameConfig, FrontEnd, UplinkFrame, BITS_PER_SYMBOL,
};
use crate::config::{ExperimentKind, ExperimentSpec};
use crate::detectors::{Detector, PreparedDetector, LLR_CLAMP};
use crate::error::{Error, Result};
use crate::estimators::{estimate_blmmse, estimate_lra_rls, estimate_ls, nmse, Estimator};
use crate::ldpc::{build_code, LdpcCode, SpaDecoder};
use crate::linalg::CMatrix;
use crate::quantize::BussgangModel;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nmse,
    BerUncoded,
    BerCoded,
    BerPerUser,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Nmse => "nmse",
            Metric::BerUncoded => "ber_uncoded",
            Metric::BerCoded => "ber_coded",
            Metric::BerPerUser => "ber_per_user",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One measured point of one curve. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    /// SNR in dB, or `E_b/N_0` in dB for coded runs.
    pub point_db: f64,
    pub metric: Metric,
    pub value: f64,
    /// Binomial standard error for BER, std/√trials for NMSE.
    pub stderr: f64,
    pub trials: usize,
    pub estimator: Estimator,
    /// Empty for NMSE records.
    pub detector: Option<Detector>,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "tau")]
    pub pilot_len: usize,
    pub coded: bool,
    pub near_far_db: Option<f64>,
    /// `-1` for the all-user aggregate.
    pub user_index: i64,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "point_db",
    "metric",
    "value",
    "stderr",
    "trials",
    "estimator",
    "detector",
    "M",
    "K",
    "tau",
    "coded",
    "near_far_db",
    "user_index",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            other => Err(Error::config(format!("unknown output format '{other}'"))),
        }
    }
}

/// Records of one sweep point plus the time it took.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point_index: usize,
    pub point_db: f64,
    pub records: Vec<CurveRecord>,
    pub elapsed_s: f64,
}

/// Per-sweep state shared by all trials.
struct Context<'a> {
    spec: &'a ExperimentSpec,
    code: Option<(LdpcCode, SpaDecoder)>,
    combos: Vec<(Estimator, Option<Detector>)>,
}

/// Error counts of one estimator/detector pair in one trial.
#[derive(Debug, Clone, Default)]
struct Tally {
    nmse: f64,
    errors: Vec<u64>,
    bits: Vec<u64>,
}

impl<'a> Context<'a> {
    fn new(spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let code = if spec.coded() {
            let l = &spec.ldpc;
            let code = build_code(l.n, l.rate, l.column_weight, l.seed)?;
            let decoder = SpaDecoder::new(&code);
            Some((code, decoder))
        } else {
            None
        };
        let combos = spec
            .estimators
            .iter()
            .flat_map(|&e| {
                if spec.kind == ExperimentKind::Nmse {
                    vec![(e, None)]
                } else {
                    spec.detectors.iter().map(|&d| (e, Some(d))).collect()
                }
            })
            .collect();
        Ok(Self { spec, code, combos })
    }

    fn noise_var(&self, point_db: f64) -> f64 {
        let snr_db = match &self.code {
            Some((code, _)) => snr_db_for_ebn0_db(point_db, code.rate()),
            None => point_db,
        };
        noise_var_for_snr_db(snr_db, self.spec.users, self.spec.symbol_energy)
    }

    fn trial(
        &self,
        cfg: &FrameConfig,
        point: usize,
        delta: f64,
        trial: usize,
    ) -> Result<Vec<Tally>> {
        let spec = self.spec;
        let mut rng = substream(spec.base_seed, &[point as u64, trial as u64]);
        let (frame, info) = match &self.code {
            Some((code, _)) => {
                let info: Vec<Vec<u8>> = (0..spec.users)
                    .map(|_| (0..code.k()).map(|_| rng.random::<bool>() as u8).collect())
                    .collect();
                let words = info
                    .iter()
                    .map(|i| code.encode(i))
                    .collect::<Result<Vec<_>>>()?;
                (transmit_payload(cfg, words, &mut rng)?, Some(info))
            }
            None => (transmit(cfg, &mut rng)?, None),
        };

        let mut out = Vec::with_capacity(self.combos.len());
        let mut current: Option<(Estimator, CMatrix, Option<BussgangModel>)> = None;
        for &(est, det) in &self.combos {
            if current.as_ref().map(|c| c.0) != Some(est) {
                let h_hat = self.estimate(est, &frame, cfg, delta)?;
                current = Some((est, h_hat, None));
            }
            let (_, h_hat, model) = current.as_mut().expect("set above");
            let Some(det) = det else {
                out.push(Tally {
                    nmse: nmse(h_hat, &frame.channel)?,
                    ..Tally::default()
                });
                continue;
            };
            if model.is_none() {
                let energies = cfg.per_user_energy.as_deref();
                *model = Some(match cfg.front_end {
                    FrontEnd::OneBit => {
                        BussgangModel::build(h_hat, cfg.symbol_energy, cfg.noise_var, energies)?
                    }
                    FrontEnd::Unquantized => BussgangModel::unquantized(
                        h_hat,
                        cfg.symbol_energy,
                        cfg.noise_var,
                        energies,
                    )?,
                });
            }
            let prepared = PreparedDetector::new(det, h_hat, model.clone().expect("set above"))?;
            out.push(self.detect(&prepared, &frame, info.as_deref())?);
        }
        Ok(out)
    }

    fn estimate(
        &self,
        est: Estimator,
        frame: &UplinkFrame,
        cfg: &FrameConfig,
        delta: f64,
    ) -> Result<CMatrix> {
        Ok(match est {
            Estimator::PerfectCsi => frame.channel.clone(),
            Estimator::Ls => estimate_ls(&frame.y_pilot, &frame.pilots)?.h_hat,
            Estimator::Blmmse => {
                estimate_blmmse(&frame.y_pilot, &frame.pilots, cfg.noise_var, cfg.front_end)?.h_hat
            }
            Estimator::LraRls => {
                estimate_lra_rls(
                    &frame.y_pilot,
                    &frame.pilots,
                    cfg.noise_var,
                    self.spec.rls.forgetting,
                    delta,
                    cfg.front_end,
                )?
                .h_hat
            }
        })
    }

    fn detect(
        &self,
        det: &PreparedDetector,
        frame: &UplinkFrame,
        info: Option<&[Vec<u8>]>,
    ) -> Result<Tally> {
        let users = frame.data.nrows();
        let symbols = frame.data.ncols();
        let mut tally = Tally {
            nmse: 0.0,
            errors: vec![0; users],
            bits: vec![0; users],
        };
        let mut llrs = vec![Vec::with_capacity(symbols * BITS_PER_SYMBOL); users];
        for t in 0..symbols {
            let y = frame.y_data.column(t).into_owned();
            let d = det.detect(&y)?;
            match (&self.code, &d.llrs) {
                (Some(_), Some(l)) => {
                    for (k, pair) in l.iter().enumerate() {
                        llrs[k].extend_from_slice(pair);
                    }
                }
                (Some(_), None) => {
                    return Err(Error::invalid("coded run needs a soft-output detector"));
                }
                (None, _) => {
                    for (k, s) in d.hard_symbols.iter().enumerate() {
                        let sent =
                            &frame.payload_bits[k][t * BITS_PER_SYMBOL..(t + 1) * BITS_PER_SYMBOL];
                        let got = qpsk_hard_demap(std::slice::from_ref(s));
                        tally.errors[k] +=
                            sent.iter().zip(&got).filter(|(a, b)| a != b).count() as u64;
                        tally.bits[k] += BITS_PER_SYMBOL as u64;
                    }
                }
            }
        }
        if let (Some((code, decoder)), Some(info)) = (&self.code, info) {
            for (k, user_llrs) in llrs.iter().enumerate() {
                let decoded = decoder.decode(user_llrs, self.spec.ldpc.max_iter)?;
                let got = code.extract_info(&decoded.bits);
                tally.errors[k] = info[k].iter().zip(&got).filter(|(a, b)| a != b).count() as u64;
                tally.bits[k] = info[k].len() as u64;
            }
        }
        Ok(tally)
    }

    fn run_point(&self, point: usize, delta: f64) -> Result<Vec<CurveRecord>> {
        let spec = self.spec;
        let point_db = spec.sweep_db[point];
        let cfg = spec.frame_config(self.noise_var(point_db));
        let tallies = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                self.trial(&cfg, point, delta, t).map_err(|e| Error::Trial {
                    point_db,
                    trial: t,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.aggregate(point_db, &tallies))
    }

    fn aggregate(&self, point_db: f64, tallies: &[Vec<Tally>]) -> Vec<CurveRecord> {
        let spec = self.spec;
        let trials = tallies.len();
        let base = |estimator, detector, metric, value, stderr, user_index| CurveRecord {
            point_db,
            metric,
            value,
            stderr,
            trials,
            estimator,
            detector,
            antennas: spec.antennas,
            users: spec.users,
            pilot_len: spec.pilot_len,
            coded: spec.coded(),
            near_far_db: spec.near_far_db,
            user_index,
            seed: spec.base_seed,
        };
        let mut records = Vec::new();
        for (c, &(est, det)) in self.combos.iter().enumerate() {
            if det.is_none() {
                let values: Vec<f64> = tallies.iter().map(|t| t[c].nmse).collect();
                let (mean, se) = mean_and_stderr(&values);
                records.push(base(est, None, Metric::Nmse, mean, se, -1));
                continue;
            }
            let mut errors = vec![0u64; spec.users];
            let mut bits = vec![0u64; spec.users];
            for t in tallies {
                for k in 0..spec.users {
                    errors[k] += t[c].errors[k];
                    bits[k] += t[c].bits[k];
                }
            }
            let metric = if spec.coded() {
                Metric::BerCoded
            } else {
                Metric::BerUncoded
            };
            let (p, se) = binomial(errors.iter().sum(), bits.iter().sum());
            records.push(base(est, det, metric, p, se, -1));
            if spec.kind == ExperimentKind::NearFar {
                for k in 0..spec.users {
                    let (p, se) = binomial(errors[k], bits[k]);
                    records.push(base(est, det, Metric::BerPerUser, p, se, k as i64));
                }
            }
        }
        records
    }
}

fn binomial(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 0.0);
    }
    let p = errors as f64 / bits as f64;
    (p, (p * (1.0 - p) / bits as f64).sqrt())
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))
}

/// Runs a single sweep point on `workers` threads (0 = all cores).
pub fn run_point(
    spec: &ExperimentSpec,
    point_index: usize,
    workers: usize,
) -> Result<Vec<CurveRecord>> {
    let ctx = Context::new(spec)?;
    if point_index >= spec.sweep_db.len() {
        return Err(Error::config(format!(
            "point {point_index} outside a {}-point sweep",
            spec.sweep_db.len()
        )));
    }
    let delta = spec.deltas()[point_index];
    pool(workers)?.install(|| ctx.run_point(point_index, delta))
}

/// Runs every point, calling `on_point` as each one finishes.
pub fn run_sweep_with(
    spec: &ExperimentSpec,
    workers: usize,
    mut on_point: impl FnMut(&PointResult),
) -> Result<Vec<PointResult>> {
    let ctx = Context::new(spec)?;
    let deltas = spec.deltas();
    let pool = pool(workers)?;
    let mut results = Vec::with_capacity(spec.sweep_db.len());
    for (p, &delta) in deltas.iter().enumerate() {
        let start = Instant::now();
        let records = pool.install(|| ctx.run_point(p, delta))?;
        let result = PointResult {
            point_index: p,
            point_db: spec.sweep_db[p],
            records,
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "point {} dB finished in {:.2} s",
            result.point_db,
            result.elapsed_s
        );
        on_point(&result);
        results.push(result);
    }
    Ok(results)
}

pub fn run_sweep(spec: &ExperimentSpec, workers: usize) -> Result<Vec<CurveRecord>> {
    Ok(run_sweep_with(spec, workers, |_| {})?
        .into_iter()
        .flat_map(|p| p.records)
        .collect())
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    artifact: &'static str,
    version: &'static str,
    snr_convention: &'static str,
    llr_clamp: f64,
    spec: &'a ExperimentSpec,
    records: &'a [CurveRecord],
}

/// Writes records as CSV (columns in [`CSV_COLUMNS`] order) or as a JSON
/// document that embeds the spec.
pub fn write_results(
    records: &[CurveRecord],
    spec: &ExperimentSpec,
    path: &Path,
    format: ResultFormat,
) -> Result<()> {
    match format {
        ResultFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(path)?;
            w.write_record(CSV_COLUMNS)?;
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        ResultFormat::Json => {
            let doc = JsonDocument {
                artifact: "onebit-mimo",
                version: env!("CARGO_PKG_VERSION"),
                snr_convention: "SNR = K*Es/N0 per receive antenna; Eb/N0 = SNR/(2R)",
                llr_clamp: LLR_CLAMP,
                spec,
                records,
            };
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            std::fs::write(path, text)?;
        }
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CurveRecord>> {
    read_csv_from(std::fs::File::open(path)?)
}

/// Parses records written by [`write_results`] in CSV form.
pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Vec<CurveRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (i, row) in r.deserialize::<CurveRecord>().enumerate() {
        let rec = row?;
        let in_range = match rec.metric {
            Metric::Nmse => rec.value >= 0.0 && rec.value.is_finite(),
            _ => (0.0..=1.0).contains(&rec.value),
        };
        if !in_range || !(rec.stderr >= 0.0 && rec.stderr.is_finite()) {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!(
                    "{} value {} ± {} out of range",
                    rec.metric, rec.value, rec.stderr
                ),
            });
        }
        records.push(rec);
    }
    Ok(records)
}
