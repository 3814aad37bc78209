//! Batch front end: configuration, cell cache, subcommands and report output.

pub mod cache;
pub mod commands;
pub mod config;
pub mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
pub use cache::{load_or_compute, CacheKey, CacheStatus, CellEntry};
pub use commands::{Context, Verdict};
pub use config::{parse_epsilon, RunConfig};
pub use report::{SweepSummary, CSV_COLUMNS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_WINDOW: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "homog",
    version,
    about = "Periodic homogenization of a two-phase nonlinear Robin problem"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cell-solution cache directory; overrides `output.cache`.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for the randomized checks of `verify`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Fill the `seconds` column of the sweep CSV.
    #[arg(long, global = true)]
    pub timings: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve (or load) the cell problems and print the homogenized tensor.
    Cell,
    /// Solve the fine problem at one epsilon.
    Fine {
        /// Epsilon as `1/N`.
        #[arg(long)]
        eps: String,
    },
    /// Solve the homogenized problem.
    Hom,
    /// Run the epsilon sweep and emit CSV, plot and summary.
    Sweep,
    /// Run the identity, compatibility and bound checks.
    Verify,
    /// Regenerate CSV and plot from a previous sweep summary.
    Report,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidCell(_) => EXIT_CONFIG,
        Error::Solver { source, .. } => exit_code(source),
        e if e.is_solver_failure() => EXIT_SOLVER,
        Error::Meshing(_) | Error::UnmatchedPeriodic(_) | Error::DegenerateTriangle { .. } => {
            EXIT_SOLVER
        }
        _ => EXIT_OTHER,
    }
}

fn context(cli: &Cli) -> Result<Context> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let config = RunConfig::load(path)?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let cache = cli.cache.clone().or_else(|| config.output.cache.clone());
    Ok(Context {
        config,
        out,
        cache,
        seed: cli.seed,
        timings: cli.timings,
    })
}

pub fn dispatch(cli: &Cli, log: &mut dyn Write) -> Result<Verdict> {
    if let Command::Report = cli.command {
        let out = match (&cli.out, &cli.config) {
            (Some(o), _) => o.clone(),
            (None, Some(p)) => RunConfig::load(p)?
                .output
                .dir
                .unwrap_or_else(|| PathBuf::from("out")),
            (None, None) => PathBuf::from("out"),
        };
        return commands::cmd_report(&out, log);
    }
    let ctx = context(cli)?;
    match &cli.command {
        Command::Cell => commands::cmd_cell(&ctx, log),
        Command::Fine { eps } => commands::cmd_fine(&ctx, parse_epsilon(eps)?, log),
        Command::Hom => commands::cmd_hom(&ctx, log),
        Command::Sweep => commands::cmd_sweep(&ctx, log),
        Command::Verify => commands::cmd_verify(&ctx, log),
        Command::Report => unreachable!("handled above"),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
        {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let stdout = std::io::stdout();
    let mut log = stdout.lock();
    match dispatch(&cli, &mut log) {
        Ok(Verdict::Passed) => ExitCode::from(EXIT_OK),
        Ok(Verdict::Violated) => ExitCode::from(EXIT_WINDOW),
        Err(e) => {
            let _ = log.flush();
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
