//! Experiment description loaded from JSON.
//!
//! Unknown keys are rejected. Flat `key=value` overrides address fields by
//! their JSON name (`rls.forgetting=0.9`, `detectors=mrc,zf`); the singular
//! aliases `estimator`, `detector`, `M`, `K` and `tau` are accepted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{default_pilot_mode, FrameConfig, FrontEnd, PilotMode, BITS_PER_SYMBOL};
use crate::detectors::Detector;
use crate::error::{Error, Result};
use crate::estimators::{delta_schedule, Estimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Channel-estimation NMSE versus SNR.
    Nmse,
    /// Uncoded BER versus SNR.
    Ber,
    /// LDPC-coded BER versus `E_b/N_0`.
    CodedBer,
    /// Uncoded per-user BER with one boosted terminal.
    NearFar,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Nmse => "nmse",
            ExperimentKind::Ber => "ber",
            ExperimentKind::CodedBer => "coded-ber",
            ExperimentKind::NearFar => "near-far",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlsConfig {
    #[serde(default = "default_forgetting")]
    pub forgetting: f64,
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    /// Explicit per-point regularization; overrides the log-linear schedule.
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
}

fn default_forgetting() -> f64 {
    0.94
}
fn default_delta_min() -> f64 {
    1e-11
}
fn default_delta_max() -> f64 {
    0.3
}

impl Default for RlsConfig {
    fn default() -> Self {
        Self {
            forgetting: default_forgetting(),
            delta_min: default_delta_min(),
            delta_max: default_delta_max(),
            delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpcConfig {
    #[serde(default = "default_ldpc_n")]
    pub n: usize,
    #[serde(default = "default_ldpc_rate")]
    pub rate: f64,
    #[serde(default = "default_column_weight")]
    pub column_weight: usize,
    #[serde(default = "default_ldpc_seed")]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_ldpc_n() -> usize {
    512
}
fn default_ldpc_rate() -> f64 {
    0.5
}
fn default_column_weight() -> usize {
    3
}
fn default_ldpc_seed() -> u64 {
    1
}
fn default_max_iter() -> usize {
    crate::ldpc::DEFAULT_MAX_ITER
}

impl Default for LdpcConfig {
    fn default() -> Self {
        Self {
            n: default_ldpc_n(),
            rate: default_ldpc_rate(),
            column_weight: default_column_weight(),
            seed: default_ldpc_seed(),
            max_iter: default_max_iter(),
        }
    }
}

fn default_symbol_energy() -> f64 {
    1.0
}
fn default_trials() -> usize {
    100
}
fn default_base_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub kind: ExperimentKind,
    /// `M`
    pub antennas: usize,
    /// `K`
    pub users: usize,
    /// `τ`
    pub pilot_len: usize,
    /// Data symbols per user and frame. Coded runs always carry one codeword
    /// (`n/2` symbols) and reject any other value.
    #[serde(default)]
    pub data_len: Option<usize>,
    #[serde(default = "default_symbol_energy")]
    pub symbol_energy: f64,
    /// SNR points in dB (`E_b/N_0` for coded runs).
    pub sweep_db: Vec<f64>,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub detectors: Vec<Detector>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub rls: RlsConfig,
    /// Boost of user 0 over the others, in dB (near-far runs only).
    #[serde(default)]
    pub near_far_db: Option<f64>,
    /// Defaults to orthogonal when `τ` is a power of two ≥ `K`.
    #[serde(default)]
    pub pilot_mode: Option<PilotMode>,
    #[serde(default)]
    pub ldpc: LdpcConfig,
    /// Replace the 1-bit front end by ideal ADCs (diagnostics only).
    #[serde(default)]
    pub ideal_adc: bool,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
}

const DEFAULT_DATA_LEN: usize = 32;

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn coded(&self) -> bool {
        self.kind == ExperimentKind::CodedBer
    }

    pub fn pilot_mode(&self) -> PilotMode {
        self.pilot_mode
            .unwrap_or_else(|| default_pilot_mode(self.users, self.pilot_len))
    }

    pub fn front_end(&self) -> FrontEnd {
        if self.ideal_adc {
            FrontEnd::Unquantized
        } else {
            FrontEnd::OneBit
        }
    }

    /// Data symbols per user per frame.
    pub fn data_len(&self) -> usize {
        if self.coded() {
            self.ldpc.n / BITS_PER_SYMBOL
        } else {
            self.data_len.unwrap_or(DEFAULT_DATA_LEN)
        }
    }

    /// Per-user symbol energies, `None` outside the near-far setting.
    pub fn per_user_energy(&self) -> Option<Vec<f64>> {
        let boost = self
            .near_far_db
            .filter(|_| self.kind == ExperimentKind::NearFar)?;
        let mut e = vec![self.symbol_energy; self.users];
        e[0] *= 10f64.powf(boost / 10.0);
        Some(e)
    }

    /// RLS regularization for each sweep point.
    pub fn deltas(&self) -> Vec<f64> {
        match &self.rls.delta {
            Some(d) => d.clone(),
            None => delta_schedule(&self.sweep_db, self.rls.delta_min, self.rls.delta_max),
        }
    }

    /// Frame parameters (without noise level) shared by all points.
    pub fn frame_config(&self, noise_var: f64) -> FrameConfig {
        FrameConfig {
            antennas: self.antennas,
            users: self.users,
            pilot_len: self.pilot_len,
            data_len: self.data_len(),
            symbol_energy: self.symbol_energy,
            noise_var,
            per_user_energy: self.per_user_energy(),
            pilot_mode: self.pilot_mode(),
            front_end: self.front_end(),
        }
    }

    /// Checks every invariant without running anything.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.users == 0 || self.antennas < self.users {
            return fail(format!(
                "need antennas >= users >= 1, got M={} K={}",
                self.antennas, self.users
            ));
        }
        if self.pilot_len == 0 {
            return fail("pilot_len must be at least 1".into());
        }
        if !(self.symbol_energy > 0.0 && self.symbol_energy.is_finite()) {
            return fail(format!(
                "symbol_energy {} must be positive",
                self.symbol_energy
            ));
        }
        if self.sweep_db.is_empty() {
            return fail("sweep_db must not be empty".into());
        }
        if self.sweep_db.iter().any(|p| !p.is_finite()) {
            return fail("sweep_db contains a non-finite point".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return fail("at least one estimator is required".into());
        }
        if self.kind != ExperimentKind::Nmse && self.detectors.is_empty() {
            return fail("at least one detector is required".into());
        }
        if self.kind == ExperimentKind::Nmse && self.estimators.contains(&Estimator::PerfectCsi) {
            return fail("perfect-csi has no estimation error to measure".into());
        }
        if let Some(d) = self.data_len {
            if d == 0 {
                return fail("data_len must be at least 1".into());
            }
            if self.coded() && d != self.data_len() {
                return fail(format!(
                    "coded runs carry one codeword per user: data_len must be {}",
                    self.data_len()
                ));
            }
        }
        match (self.kind, self.near_far_db) {
            (ExperimentKind::NearFar, None) => {
                return fail("near-far runs need near_far_db".into());
            }
            (ExperimentKind::NearFar, Some(b)) if !(b >= 0.0 && b.is_finite()) => {
                return fail(format!("near_far_db {b} must be >= 0"));
            }
            (k, Some(_)) if k != ExperimentKind::NearFar => {
                return fail("near_far_db only applies to near-far runs".into());
            }
            _ => {}
        }
        if self.coded() {
            if let Some(d) = self.detectors.iter().find(|d| !d.is_soft()) {
                return fail(format!(
                    "detector {d} has no soft output; coded runs need lra-mmse or sic-soft"
                ));
            }
            let l = &self.ldpc;
            if l.n == 0 || !l.n.is_multiple_of(BITS_PER_SYMBOL) {
                return fail(format!("ldpc.n = {} must be a positive even number", l.n));
            }
            if !(l.rate > 0.0 && l.rate < 1.0) || l.column_weight == 0 || l.max_iter == 0 {
                return fail("ldpc rate must lie in (0,1); column_weight and max_iter >= 1".into());
            }
        }
        let r = &self.rls;
        if !(r.forgetting > 0.0 && r.forgetting <= 1.0) {
            return fail(format!("rls.forgetting {} outside (0, 1]", r.forgetting));
        }
        if !(r.delta_min > 0.0
            && r.delta_max > 0.0
            && r.delta_min.is_finite()
            && r.delta_max.is_finite())
        {
            return fail("rls.delta_min and rls.delta_max must be positive".into());
        }
        if let Some(d) = &r.delta {
            if d.len() != self.sweep_db.len() {
                return fail(format!(
                    "rls.delta has {} entries for {} sweep points",
                    d.len(),
                    self.sweep_db.len()
                ));
            }
            if d.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return fail("rls.delta entries must be positive".into());
            }
        }
        if self.pilot_mode == Some(PilotMode::Orthogonal)
            && (self.pilot_len < self.users || !self.pilot_len.is_power_of_two())
        {
            return fail(format!(
                "orthogonal pilots need a power-of-two pilot_len >= users, got {}",
                self.pilot_len
            ));
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override '{assignment}' is not key=value")))?;
        let key = match key.trim() {
            "estimator" => "estimators",
            "detector" => "detectors",
            "M" => "antennas",
            "K" => "users",
            "tau" => "pilot_len",
            other => other,
        };
        let mut doc = serde_json::to_value(&*self).expect("spec serializes");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map
                    .get_mut(part)
                    .ok_or_else(|| Error::config(format!("unknown config key '{key}'")))?,
                _ => return Err(Error::config(format!("unknown config key '{key}'"))),
            };
        }
        if slot.is_object() {
            return Err(Error::config(format!("'{key}' is a section, not a value")));
        }
        let as_list = slot.is_array();
        *slot = parse_override_value(raw.trim(), as_list);
        let parsed = serde_json::from_value(doc.clone()).or_else(|e| {
            // optional lists are null in the document, so retry a scalar as a list
            if as_list || raw.trim().starts_with('[') {
                return Err(e);
            }
            *slot_mut(&mut doc, key) = parse_override_value(raw.trim(), true);
            serde_json::from_value(doc).map_err(|_| e)
        });
        *self = parsed.map_err(|e| Error::config(format!("bad value for '{key}': {e}")))?;
        Ok(())
    }
}

fn slot_mut<'a>(doc: &'a mut Value, key: &str) -> &'a mut Value {
    key.split('.').fold(doc, |v, part| &mut v[part])
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn parse_override_value(raw: &str, as_list: bool) -> Value {
    if raw.starts_with('[') {
        return parse_scalar(raw);
    }
    if as_list {
        return Value::Array(
            raw.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_scalar(s.trim()))
                .collect(),
        );
    }
    parse_scalar(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "name": "smoke",
        "kind": "ber",
        "antennas": 8, "users": 2, "pilot_len": 8,
        "sweep_db": [0, 10],
        "estimators": ["perfect-csi"],
        "detectors": ["mrc", "lra-mmse"],
        "trials": 50
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = ExperimentSpec::from_json(SMALL).unwrap();
        s.validate().unwrap();
        assert_eq!(s.rls.forgetting, 0.94);
        assert_eq!(s.ldpc.n, 512);
        assert_eq!(s.data_len(), DEFAULT_DATA_LEN);
        assert_eq!(s.pilot_mode(), PilotMode::Orthogonal);
        assert!(!s.coded());
        assert!(s.per_user_energy().is_none());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SMALL.replace("\"trials\"", "\"trails\"");
        assert!(ExperimentSpec::from_json(&bad).unwrap_err().is_config());
        let bad = SMALL.replace("\"mrc\"", "\"ml\"");
        assert!(ExperimentSpec::from_json(&bad).is_err());
    }

    #[test]
    fn overrides() {
        let mut s = ExperimentSpec::from_json(SMALL).unwrap();
        s.apply_override("detector=sic-hard").unwrap();
        assert_eq!(s.detectors, vec![Detector::SicHard]);
        s.apply_override("detectors=mrc,zf").unwrap();
        assert_eq!(s.detectors, vec![Detector::Mrc, Detector::Zf]);
        s.apply_override("rls.forgetting=0.9").unwrap();
        assert_eq!(s.rls.forgetting, 0.9);
        s.apply_override("sweep_db=-5,0,5").unwrap();
        assert_eq!(s.sweep_db, vec![-5.0, 0.0, 5.0]);
        s.apply_override("M=16").unwrap();
        assert_eq!(s.antennas, 16);
        s.apply_override("rls.delta=[1e-3,1e-2,1e-1]").unwrap();
        assert_eq!(s.rls.delta.as_deref(), Some(&[1e-3, 1e-2, 1e-1][..]));
        s.apply_override("rls.delta=1e-3,1e-2,0.1").unwrap();
        assert_eq!(s.rls.delta.as_deref(), Some(&[1e-3, 1e-2, 1e-1][..]));
        s.validate().unwrap();
        let mut one = ExperimentSpec::from_json(SMALL).unwrap();
        one.apply_override("sweep_db=5").unwrap();
        one.apply_override("rls.delta=2e-6").unwrap();
        assert_eq!(one.rls.delta.as_deref(), Some(&[2e-6][..]));
        assert!(one.apply_override("near_far_db=loud").is_err());

        assert!(s.apply_override("bogus=1").unwrap_err().is_config());
        assert!(s.apply_override("rls=1").is_err());
        assert!(s.apply_override("trials=many").is_err());
        assert!(s.apply_override("novalue").is_err());
        assert!(s.apply_override("detector=ml").is_err());
    }

    #[test]
    fn validation_failures() {
        let base = ExperimentSpec::from_json(SMALL).unwrap();
        type Mutation = Box<dyn Fn(&mut ExperimentSpec)>;
        let cases: Vec<(&str, Mutation)> = vec![
            ("empty sweep", Box::new(|s| s.sweep_db.clear())),
            ("no trials", Box::new(|s| s.trials = 0)),
            ("K > M", Box::new(|s| s.users = 9)),
            (
                "near-far without boost",
                Box::new(|s| s.kind = ExperimentKind::NearFar),
            ),
            ("boost on ber", Box::new(|s| s.near_far_db = Some(6.0))),
            (
                "hard detector in coded run",
                Box::new(|s| s.kind = ExperimentKind::CodedBer),
            ),
            ("bad forgetting", Box::new(|s| s.rls.forgetting = 1.5)),
            ("delta length", Box::new(|s| s.rls.delta = Some(vec![1.0]))),
            (
                "orthogonal infeasible",
                Box::new(|s| {
                    s.pilot_len = 6;
                    s.pilot_mode = Some(PilotMode::Orthogonal);
                }),
            ),
        ];
        for (what, mutate) in cases {
            let mut s = base.clone();
            mutate(&mut s);
            assert!(s.validate().unwrap_err().is_config(), "{what} accepted");
        }
    }

    #[test]
    fn near_far_energies() {
        let mut s = ExperimentSpec::from_json(SMALL).unwrap();
        s.kind = ExperimentKind::NearFar;
        s.near_far_db = Some(6.0);
        s.validate().unwrap();
        let e = s.per_user_energy().unwrap();
        assert!((e[0] - 10f64.powf(0.6)).abs() < 1e-12);
        assert_eq!(e[1], 1.0);
    }

    #[test]
    fn coded_data_len() {
        let mut s = ExperimentSpec::from_json(SMALL).unwrap();
        s.kind = ExperimentKind::CodedBer;
        s.detectors = vec![Detector::SicSoft];
        assert_eq!(s.data_len(), 256);
        s.validate().unwrap();
        s.data_len = Some(100);
        assert!(s.validate().is_err());
    }
}
