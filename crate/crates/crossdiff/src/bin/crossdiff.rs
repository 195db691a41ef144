//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invariant-audit failure, 2 configuration error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crossdiff::config::RunConfig;
use crossdiff::error::Error;
use crossdiff::experiments;
use crossdiff::model::{compute_constants, validate_hypotheses_seeded, ModelSpec};

#[derive(Parser)]
#[command(
    name = "crossdiff",
    about = "Entropy-structured solver for degenerate cross-diffusion \
             population systems with volume filling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural hypotheses of a catalog model on sampled points.
    Validate {
        /// Catalog name, e.g. ion-transport, power-q:2, skt-volume,
        /// exp-q:1, vanishing-q:1.
        model: String,
        #[arg(long, default_value_t = 2)]
        species: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0x5eed_cafe)]
        seed: u64,
    },
    /// Print the derived model constants (p0, delta, a, c0, ...).
    Constants {
        model: String,
        #[arg(long, default_value_t = 2)]
        species: usize,
    },
    /// Run a simulation with per-step invariant audits.
    Run { config: PathBuf },
    /// Run and fit the decay rate of a component toward the steady state.
    Decay { config: PathBuf },
    /// Two perturbed runs; distances between them must not increase.
    Unique { config: PathBuf },
    /// Lattice master-equation refinement study against the continuum.
    Lattice { config: PathBuf },
    /// Positivity probe for mobilities with divergent log integral.
    Positivity { config: PathBuf },
}

fn load(path: &std::path::Path, expected: crossdiff::config::ExperimentKind) -> Result<RunConfig, Error> {
    let cfg = RunConfig::from_file(path)?;
    if cfg.experiment.kind != expected {
        return Err(Error::Config(format!(
            "config declares kind '{}' but the subcommand is '{}'",
            cfg.experiment.kind.name(),
            expected.name()
        )));
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<i32, Error> {
    use crossdiff::config::ExperimentKind as K;
    match command {
        Command::Validate { model, species, samples, seed } => {
            let m = ModelSpec::by_name(&model, species)?;
            let report = validate_hypotheses_seeded(&m, samples, seed);
            print!("{report}");
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Constants { model, species } => {
            let m = ModelSpec::by_name(&model, species)?;
            let c = compute_constants(&m);
            println!("{}", serde_json::to_string_pretty(&c).expect("serializable constants"));
            Ok(0)
        }
        Command::Run { config } => experiments::run_configured(&load(&config, K::Run)?),
        Command::Decay { config } => experiments::run_configured(&load(&config, K::Decay)?),
        Command::Unique { config } => experiments::run_configured(&load(&config, K::Unique)?),
        Command::Lattice { config } => experiments::run_configured(&load(&config, K::Lattice)?),
        Command::Positivity { config } => {
            experiments::run_configured(&load(&config, K::Positivity)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
