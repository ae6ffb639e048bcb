use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use onebit_core::config::{ExperimentKind, ExperimentSpec};
use onebit_core::harness::{run_sweep_with, write_results, PointResult, ResultFormat};
use onebit_core::Error;

const SCHEMA: &str = "\
CONFIG SCHEMA (JSON, unknown keys are rejected)
  name            free-form label
  kind            nmse | ber | coded-ber | near-far (must match the subcommand)
  antennas        M, receive antennas
  users           K, single-antenna users (K <= M)
  pilot_len       tau, pilot symbols per frame
  data_len        data symbols per user and frame (default 32; coded runs
                  always carry one codeword, ldpc.n/2 symbols)
  symbol_energy   sigma_x^2 (default 1)
  sweep_db        SNR points in dB; Eb/N0 points for coded-ber
  estimators      any of perfect-csi, ls, blmmse, lra-rls
  detectors       any of mrc, zf, lra-mmse, sic-hard, sic-soft
                  (coded-ber accepts only the soft ones: lra-mmse, sic-soft)
  trials          frames per sweep point (default 100)
  rls.forgetting  lambda (default 0.94)
  rls.delta_min   regularization at the lowest point (default 1e-11)
  rls.delta_max   regularization at the highest point (default 0.3)
  rls.delta       explicit per-point list, overrides the log-linear schedule
  near_far_db     boost of user 0 in dB (near-far only)
  pilot_mode      orthogonal | random (default orthogonal when tau is a
                  power of two >= K)
  ldpc.n, ldpc.rate, ldpc.column_weight, ldpc.seed, ldpc.max_iter
                  code for coded-ber (defaults 512, 0.5, 3, 1, 50)
  ideal_adc       bypass the 1-bit quantizer (default false)
  base_seed       root of all random streams (default 1)

SNR CONVENTION
  SNR = K*sigma_x^2/sigma_n^2 per receive antenna with unit-variance
  channel taps. Coded runs sweep Eb/N0 = SNR/(2R) for QPSK at code rate R.

OVERRIDES
  --set key=value addresses a field by its JSON name, e.g.
  --set detector=sic-hard --set rls.forgetting=1 --set sweep_db=0,5,10

EXIT CODES
  0 success, 2 configuration or usage error, 3 runtime failure, 4 I/O error";

#[derive(Parser, Debug)]
#[command(
    name = "onebit-mimo",
    version,
    about = "Monte-Carlo sweeps for multi-user MIMO uplinks with 1-bit ADCs",
    after_long_help = SCHEMA
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Channel-estimation NMSE versus SNR
    EstimateSweep(RunArgs),
    /// Uncoded BER versus SNR
    BerSweep(RunArgs),
    /// LDPC-coded BER versus Eb/N0
    CodedSweep(RunArgs),
    /// Per-user uncoded BER with one boosted user
    NearFar(RunArgs),
    /// Check a config (with overrides) without running it
    Validate(SpecArgs),
}

#[derive(Args, Debug)]
struct SpecArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed; replaces base_seed from the config
    #[arg(long, env = "ONEBIT_MIMO_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Result file (default: <config stem>.<format> in the working directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Result format (default: from the --out extension, else csv)
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Suppress per-point summary lines
    #[arg(long)]
    quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ResultFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ResultFormat::Csv,
            Format::Json => ResultFormat::Json,
        }
    }
}

fn load_spec(args: &SpecArgs) -> Result<ExperimentSpec, Error> {
    let mut spec = ExperimentSpec::load(&args.config)?;
    for o in &args.overrides {
        spec.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn output_target(args: &RunArgs) -> (PathBuf, ResultFormat) {
    let from_ext = |p: &Path| match p.extension().and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    };
    let format = args
        .format
        .or_else(|| args.out.as_deref().map(from_ext))
        .unwrap_or(Format::Csv);
    let path = args.out.clone().unwrap_or_else(|| {
        let stem = args
            .spec
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "results".into());
        let ext = match format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        PathBuf::from(format!("{stem}.{ext}"))
    });
    (path, format.into())
}

fn print_point(p: &PointResult) {
    for r in &p.records {
        let combo = match r.detector {
            Some(d) => format!("{}/{}", r.estimator, d),
            None => r.estimator.to_string(),
        };
        let user = if r.user_index >= 0 {
            format!(" user {}", r.user_index)
        } else {
            String::new()
        };
        println!(
            "{:>7.2} dB  {:<12} {:<22} {:.4e} ± {:.2e}{}  ({:.1} s)",
            r.point_db, r.metric, combo, r.value, r.stderr, user, p.elapsed_s
        );
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), Error> {
    let spec = load_spec(&args.spec)?;
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "config describes a {} experiment, not {}",
            spec.kind.name(),
            kind.name()
        )));
    }
    let (path, format) = output_target(args);
    let points = run_sweep_with(&spec, args.workers, |p| {
        if !args.quiet {
            print_point(p);
        }
    })?;
    let records: Vec<_> = points.into_iter().flat_map(|p| p.records).collect();
    write_results(&records, &spec, &path, format)?;
    if !args.quiet {
        println!("wrote {} records to {}", records.len(), path.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else if e.is_io() {
        4
    } else {
        3
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::EstimateSweep(a) => run(ExperimentKind::Nmse, a),
        Command::BerSweep(a) => run(ExperimentKind::Ber, a),
        Command::CodedSweep(a) => run(ExperimentKind::CodedBer, a),
        Command::NearFar(a) => run(ExperimentKind::NearFar, a),
        Command::Validate(a) => load_spec(a).map(|s| {
            println!(
                "{}: valid {} experiment, {} points x {} trials",
                a.config.display(),
                s.kind.name(),
                s.sweep_db.len(),
                s.trials
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
