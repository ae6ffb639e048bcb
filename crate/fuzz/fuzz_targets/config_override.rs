#![no_main]

use libfuzzer_sys::fuzz_target;
use onebit_core::config::ExperimentSpec;

const BASE: &str = r#"{"kind": "ber", "antennas": 8, "users": 2, "pilot_len": 8,
    "sweep_db": [0, 10], "estimators": ["perfect-csi"], "detectors": ["mrc"]}"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut spec = ExperimentSpec::from_json(BASE).unwrap();
    for line in text.lines() {
        if spec.apply_override(line).is_err() {
            return;
        }
    }
    let _ = spec.validate();
});
