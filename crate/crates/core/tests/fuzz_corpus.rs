//! Replays the checked-in fuzz corpus through the same entry points and
//! checks as the fuzz targets under `fuzz/`.

use std::path::{Path, PathBuf};

use onebit_core::config::ExperimentSpec;
use onebit_core::harness::read_csv_from;
use onebit_core::ldpc::{build_code, parse_alist, write_alist, SpaDecoder};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn alist_seeds() {
    for (name, data) in seeds("alist") {
        let parsed = parse_alist(text(&data));
        let expect_ok = !(name.starts_with("bad") || name.starts_with("truncated"));
        assert_eq!(parsed.is_ok(), expect_ok, "{name}");
        if let Ok(h) = parsed {
            assert_eq!(parse_alist(&write_alist(&h)).unwrap().rows(), h.rows());
        }
    }
}

#[test]
fn config_json_seeds() {
    for (name, data) in seeds("config_json") {
        match ExperimentSpec::from_json(text(&data)) {
            Ok(spec) => {
                spec.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
                assert_eq!(ExperimentSpec::from_json(&spec.to_json()).unwrap(), spec);
            }
            Err(e) => assert!(name.starts_with("unknown") && e.is_config(), "{name}: {e}"),
        }
    }
}

#[test]
fn config_override_seeds() {
    let base = r#"{"kind": "ber", "antennas": 8, "users": 2, "pilot_len": 8,
        "sweep_db": [0, 10], "estimators": ["perfect-csi"], "detectors": ["mrc"]}"#;
    for (name, data) in seeds("config_override") {
        let mut spec = ExperimentSpec::from_json(base).unwrap();
        let applied: Result<Vec<()>, _> = text(&data)
            .lines()
            .map(|l| spec.apply_override(l))
            .collect();
        assert_eq!(applied.is_ok(), name != "section", "{name}");
    }
}

#[test]
fn results_csv_seeds() {
    for (name, data) in seeds("results_csv") {
        let parsed = read_csv_from(data.as_slice());
        assert_eq!(parsed.is_ok(), !name.starts_with("wrong"), "{name}");
    }
}

#[test]
fn spa_decode_seeds() {
    let code = build_code(64, 0.5, 3, 1).unwrap();
    let decoder = SpaDecoder::new(&code);
    for (name, data) in seeds("spa_decode") {
        assert!(data.len() > code.n(), "{name} too short");
        let max_iter = 1 + data[0] as usize % 60;
        let llrs: Vec<f64> = data[1..=code.n()]
            .iter()
            .map(|&b| (b as i8) as f64 / 2.0)
            .collect();
        let r = decoder.decode(&llrs, max_iter).unwrap();
        assert_eq!(r.syndrome_ok, code.parity().syndrome_ok(&r.bits), "{name}");
        if name.starts_with("clean") {
            assert_eq!(r.iterations_used, 0);
            assert_eq!(code.extract_info(&r.bits), vec![1; code.k()]);
        }
    }
}
