#![no_main]

use libfuzzer_sys::fuzz_target;
use onebit_core::config::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = ExperimentSpec::from_json(text) {
        let _ = spec.validate();
        let again = ExperimentSpec::from_json(&spec.to_json()).expect("serialized spec parses");
        assert_eq!(again.to_json(), spec.to_json());
    }
});
