//! Command-line front end: config-driven training runs with JSONL traces,
//! the scripted theory verifications, and CSV tables of the regularizers
//! and their prox operators for external plotting.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod prox_table;
mod theory;
mod train;

/// Exit code for configuration and usage errors.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for training aborted by numeric divergence.
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "proxlab",
    version,
    about = "Train quantized models by proximal-gradient regularized learning"
)]
struct Cli {
    /// Configuration file (TOML). Required by `train`; optional field
    /// overrides for `signchange`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, created if missing. Defaults to the config's
    /// `out_dir` (train) and then to "proxlab-out".
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace the configured seed list (train) or the default seed of a
    /// seeded verification with this value.
    #[arg(long, global = true, value_name = "N")]
    seed_override: Option<u64>,

    /// Suppress progress lines on stdout; errors still go to stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per the config file: one JSONL trace per seed plus a summary.
    Train,
    /// Run scripted verifications and write their JSON reports.
    Theory {
        /// toy-failure | theorem1 | theorem2 | theorem3 | sign-change |
        /// gradcheck | all
        #[arg(default_value = "all")]
        name: String,
    },
    /// Dump (theta, lambda, R(theta), prox(theta)) rows as CSV.
    ProxTable(prox_table::ProxTableArgs),
    /// Run the warm-start sign-change experiment and write its report.
    Signchange,
    /// Run the finite-difference gradient checks and write the report.
    Gradcheck,
}

/// Flags shared by every subcommand.
pub struct Ctx {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub quiet: bool,
}

impl Ctx {
    /// Output directory for commands whose location the config file does
    /// not control.
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("proxlab-out"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        config: cli.config,
        out: cli.out,
        seed_override: cli.seed_override,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Train => train::cmd_train(&ctx),
        Command::Theory { name } => theory::cmd_theory(&ctx, &name),
        Command::ProxTable(args) => prox_table::cmd_prox_table(&ctx, &args),
        Command::Signchange => theory::cmd_signchange(&ctx),
        Command::Gradcheck => theory::cmd_gradcheck(&ctx),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
