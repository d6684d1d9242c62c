//! `polycgo`: command-line driver for the Green-operator, CGO, DN-map,
//! reconstruction and Carleman pipelines.
//!
//! Exit codes: 0 pass, 1 invariant failure, 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, CliResult, Summary};
use config::RunConfig;

/// Environment variable holding the worker-thread count.
const THREADS_VAR: &str = "POLYCGO_THREADS";

#[derive(Parser)]
#[command(
    name = "polycgo",
    version,
    about = "CGO solutions and inverse problems for (-Delta)^m + q"
)]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set grid.points_per_axis=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the fundamental-solution residual, weighted decay and L^p ratios of G_zeta.
    GreenVerify,
    /// Build CGO remainders for every s in zeta.s.
    CgoBuild,
    /// Simulate the Dirichlet-to-Neumann map of the configured potential.
    DnSim {
        /// Output file name inside output.directory.
        #[arg(long, default_value = "dn.json")]
        name: String,
    },
    /// Recover low frequencies of q from an oracle potential or two DN maps.
    Reconstruct,
    /// Sweep the Carleman-estimate ratios.
    CarlemanProbe,
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_VAR}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<Summary> {
    init_threads()?;
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides).map_err(CliError::Usage)?;
    match &cli.command {
        Command::GreenVerify => commands::green_verify(&cfg),
        Command::CgoBuild => commands::cgo_build(&cfg),
        Command::DnSim { name } => commands::dn_sim(&cfg, name),
        Command::Reconstruct => commands::run_reconstruct(&cfg),
        Command::CarlemanProbe => commands::carleman_probe(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed invariants: {}", summary.failed.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
