use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod io;

/// Simulation, filtering and error studies for regime-switching fast
/// mean-reverting models.
#[derive(Debug, Parser)]
#[command(name = "avgfilter", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a hidden path and its observations.
    Simulate {
        #[arg(long, short)]
        config: PathBuf,
        /// Overrides `seed` in [model].
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides AVGFILTER_OUT_DIR and [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one filter over an observation CSV.
    Filter {
        #[arg(long, short)]
        config: PathBuf,
        /// `k,t,y` observations or a `timestamp,log_price` series.
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, value_enum, default_value = "averaged")]
        filter: FilterKind,
        /// Fine-grid path CSV (`l,t,theta,x`) used to report the 0-1 error.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an error sweep over epsilon or over the substep count.
    Experiment {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, value_enum)]
        sweep: SweepKind,
        /// Shifts the seed list to start at this value.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running anything.
    ValidateConfig {
        #[arg(long, short)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterKind {
    Optimal,
    Averaged,
    AveragedMatrix,
    Rb,
    Oracle,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Optimal => "optimal",
            FilterKind::Averaged => "averaged",
            FilterKind::AveragedMatrix => "averaged-matrix",
            FilterKind::Rb => "rb",
            FilterKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Epsilon,
    Dt,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || match cli.command {
        Command::Simulate { config, seed, out } => commands::simulate(&config, seed, out),
        Command::Filter {
            config,
            observations,
            filter,
            truth,
            seed,
            out,
        } => commands::filter(&config, &observations, filter, truth.as_deref(), seed, out),
        Command::Experiment {
            config,
            sweep,
            seed,
            out,
        } => commands::experiment(&config, sweep, seed, out),
        Command::ValidateConfig { config } => commands::validate(&config),
    };
    let result = match cli.threads {
        Some(0) => Err(commands::Failure::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(commands::Failure::Runtime(format!("cannot start thread pool: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
