//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or argument error, 3 numerical
//! failure, 4 input/output or file-format error.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::{RunConfig, Settings};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "FDIDENT_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "fdident", version, about = "Frequency-domain identification with computed windowing corrections")]
pub struct Cli {
    /// Flat TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps and Monte Carlo runs.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a seeded experiment and write x.csv, u.csv and truth.json.
    Simulate(RunConfig),
    /// Estimate a model from x.csv and u.csv; writes report.json and residual.csv.
    Identify(RunConfig),
    /// Window samples, spectra and the f_err table.
    Window(RunConfig),
    /// Sampling-rate sweep; writes sweep.csv.
    Sweep(RunConfig),
    /// Noisy Monte Carlo ensemble; writes ensemble.csv.
    Montecarlo(RunConfig),
    /// Overlap variance table; writes overlap.csv.
    Overlap(RunConfig),
}

impl Command {
    fn parts(&self) -> (&'static str, &RunConfig) {
        match self {
            Command::Simulate(c) => ("simulate", c),
            Command::Identify(c) => ("identify", c),
            Command::Window(c) => ("window", c),
            Command::Sweep(c) => ("sweep", c),
            Command::Montecarlo(c) => ("montecarlo", c),
            Command::Overlap(c) => ("overlap", c),
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("worker count must be positive".into()));
        }
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let (name, flags) = cli.command.parts();
    let settings = Settings::resolve(cli.config.as_deref(), flags)?;
    log::debug!("running {name} with seed {}", settings.seed);
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&settings),
        Command::Identify(_) => commands::identify_cmd(&settings),
        Command::Window(_) => commands::window(&settings),
        Command::Sweep(_) => commands::sweep(&settings),
        Command::Montecarlo(_) => commands::montecarlo(&settings),
        Command::Overlap(_) => commands::overlap(&settings),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
