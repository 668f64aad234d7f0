use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixnoise::config::{ExperimentKind, ExperimentSpec};
use mixnoise::harness;
use mixnoise::Error;

/// Monte Carlo experiments on noise-assisted entanglement protection.
#[derive(Parser)]
#[command(name = "mixnoise", version)]
struct Cli {
    /// INI experiment file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One ensemble at the first configured mixing ratio.
    Simulate,
    /// Sweep the O-U rate γ_ξ for each mixing ratio.
    SweepGxi,
    /// Sweep the reservoir memory rate γ_Q, with a noiseless baseline.
    SweepGq,
    /// Mixing ratio of minimum concurrence per γ_ξ.
    Pmin,
    /// Analytic and estimated spectra with HF reports.
    Psd,
    /// Built-in self checks; exit code 3 on failure.
    Validate,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Simulate => ExperimentKind::Single,
            Command::SweepGxi => ExperimentKind::GammaXiSweep,
            Command::SweepGq => ExperimentKind::GammaQSweep,
            Command::Pmin => ExperimentKind::PminScan,
            Command::Psd => ExperimentKind::PsdReport,
            Command::Validate => ExperimentKind::Validate,
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

fn load(cli: &Cli) -> mixnoise::Result<ExperimentSpec> {
    let kind = cli.command.kind();
    let mut spec = match &cli.config {
        Some(path) => ExperimentSpec::from_file_as(path, Some(kind))?,
        None => ExperimentSpec { kind, ..ExperimentSpec::default() },
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match load(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);

    match harness::execute(&spec, workers, &cli.out) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {} (config_digest {})", cli.out.display(), spec.digest());
            if outcome.validation_failed {
                eprintln!("validation failed; see {}", cli.out.join("validation.json").display());
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(EXIT_DIVERGENCE)
            } else if matches!(e, Error::Config(_)) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
