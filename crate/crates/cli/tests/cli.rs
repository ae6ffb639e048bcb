use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use onebit_core::harness::read_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_onebit-mimo"));
    c.env_remove("ONEBIT_MIMO_SEED");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const TINY_NMSE: &str = r#"{
    "kind": "nmse", "antennas": 8, "users": 2, "pilot_len": 8,
    "sweep_db": [0, 10], "estimators": ["ls", "blmmse", "lra-rls"], "trials": 10
}"#;

#[test]
fn smoke_config_runs_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke.csv");
    let smoke = configs().join("smoke.json");
    let start = Instant::now();
    let o = run(&[
        "ber-sweep",
        "--config",
        smoke.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs() < 30);
    let records = read_csv(&out).unwrap();
    assert_eq!(records.len(), 2 * 2 * 2);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ber_uncoded") && stdout.contains(" ± "));
}

#[test]
fn override_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let smoke = configs().join("smoke.json");
    let o = run(&[
        "ber-sweep",
        "--config",
        smoke.to_str().unwrap(),
        "--set",
        "detector=sic-hard",
        "--set",
        "estimators=perfect-csi",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let r = read_csv(&out).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r
        .iter()
        .all(|x| x.detector.map(|d| d.name()) == Some("sic-hard")));
}

#[test]
fn estimate_sweep_compares_three_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n.json", TINY_NMSE);
    let out = dir.path().join("n.json.out");
    let o = run(&[
        "estimate-sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
        "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    let r = read_csv(&out).unwrap();
    let mut names: Vec<_> = r.iter().map(|x| x.estimator.name()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names, ["blmmse", "lra-rls", "ls"]);
}

#[test]
fn repeated_runs_are_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n.json", TINY_NMSE);
    let go = |name: &str, env_seed: Option<&str>, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args([
            "estimate-sweep",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        c.args(extra);
        if let Some(s) = env_seed {
            c.env("ONEBIT_MIMO_SEED", s);
        }
        assert!(c.status().unwrap().success());
        std::fs::read(out).unwrap()
    };
    let a = go("a.csv", None, &["--workers", "1"]);
    let b = go("b.csv", None, &["--workers", "2"]);
    assert_eq!(a, b);
    let env9 = go("c.csv", Some("9"), &[]);
    assert_ne!(a, env9);
    let flag9 = go("d.csv", Some("3"), &["--seed", "9"]);
    assert_eq!(env9, flag9);
}

#[test]
fn json_output_embeds_spec() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n.json", TINY_NMSE);
    let out = dir.path().join("res.json");
    let o = run(&[
        "estimate-sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"spec\"") && text.contains("\"records\""));
}

#[test]
fn validate_does_not_run() {
    let smoke = configs().join("smoke.json");
    let o = run(&["validate", "--config", smoke.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("valid ber experiment"));
    for name in [
        "fig2-nmse.json",
        "fig3-uncoded-ber.json",
        "fig4-coded-ber.json",
        "fig5-near-far.json",
    ] {
        let o = run(&[
            "validate",
            "--config",
            configs().join(name).to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{name}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let smoke = configs().join("smoke.json");
    let smoke = smoke.to_str().unwrap();

    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&run(&["ber-sweep", "--config", missing.to_str().unwrap()])),
        4
    );

    assert_eq!(
        code(&run(&["validate", "--config", smoke, "--set", "bogus=1"])),
        2
    );
    assert_eq!(code(&run(&["estimate-sweep", "--config", smoke])), 2);
    let bad_json = write(dir.path(), "bad.json", "{ \"kind\": ");
    assert_eq!(code(&run(&["validate", "--config", &bad_json])), 2);

    assert_ne!(code(&run(&["frobnicate"])), 0);
    assert_ne!(
        code(&run(&["ber-sweep", "--config", smoke, "--no-such-flag"])),
        0
    );

    let unwritable = dir.path().join("no-dir").join("x.csv");
    let o = run(&[
        "ber-sweep",
        "--config",
        smoke,
        "--out",
        unwritable.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 4);

    // One pilot for two users: LS has no solution, which is a runtime failure.
    let singular = write(
        dir.path(),
        "s.json",
        r#"{"kind": "nmse", "antennas": 4, "users": 2, "pilot_len": 1,
            "sweep_db": [0], "estimators": ["ls"], "trials": 3}"#,
    );
    let o = run(&[
        "estimate-sweep",
        "--config",
        &singular,
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("trial"));
}

#[test]
fn help_documents_schema_and_snr_convention() {
    let o = run(&["ber-sweep", "--help"]);
    assert_eq!(code(&o), 0);
    let o = run(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("SNR = K*sigma_x^2/sigma_n^2"));
    for key in [
        "pilot_len",
        "rls.forgetting",
        "near_far_db",
        "ldpc.max_iter",
        "base_seed",
    ] {
        assert!(text.contains(key), "{key} undocumented");
    }
}
