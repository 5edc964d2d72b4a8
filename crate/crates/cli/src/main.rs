use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spde_core::heat1d::{presets, NoiseKind};
use spde_core::runner::{emit_report, run_experiment, run_verification_suite};
use spde_core::{Error, ExperimentConfig};

/// Strong-error experiments for time discretisations of stochastic
/// evolution equations.
#[derive(Parser)]
#[command(name = "spde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML file and write its report.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the built-in verification suite.
    Verify,
    /// List the built-in heat-equation presets.
    Presets,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalFailure { .. }
        | Error::DivergentMoment { .. }
        | Error::Truncation { .. }
        | Error::UnsupportedOperator(_)
        | Error::Io(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn run(config: PathBuf, seed: Option<u64>, samples: Option<usize>, out: PathBuf) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    if let Some(k) = samples {
        cfg.experiment.samples = k;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    let files = emit_report(&report, &out)?;
    println!("{:<28} {:>6} {:>9} {:>7} {:>9} {:>9}", "scheme", "gamma", "delta", "r2", "ceiling", "p->inf");
    for r in &report.rates {
        println!(
            "{:<28} {:>6.3} {:>9.4} {:>7.4} {:>9.3} {:>9.3}{}",
            r.scheme,
            r.gamma,
            -r.slope,
            r.r_squared,
            r.predicted_ceiling,
            r.ceiling_limit,
            if r.max_error_flags.is_empty() {
                String::new()
            } else {
                format!("  max-error flags at n = {:?}", r.max_error_flags)
            }
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn list_presets() {
    for (name, spec) in presets(64) {
        let noise = match &spec.noise {
            NoiseKind::White => "white".to_string(),
            NoiseKind::FiniteRank { weights } => format!("finite rank {}", weights.len()),
        };
        let r = spec.regularity;
        println!(
            "{name:<16} f = {:<12} g = {:<12} noise = {noise:<14} theta_f = {}, theta_g = {}, eta = {}",
            spec.f.to_string(),
            spec.g.to_string(),
            r.theta_f,
            r.theta_g,
            r.eta
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            samples,
            out,
        } => match run(config, seed, samples, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
        Command::Verify => {
            let report = run_verification_suite();
            print!("{report}");
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Command::Presets => {
            list_presets();
            ExitCode::SUCCESS
        }
    }
}
