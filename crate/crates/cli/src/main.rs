//! `lpcrit`: trace critical paths, run OMP, verify fixtures and scan oracles.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(version, about = "Critical paths of lp-constrained and lp-penalized least squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace a main or greedy path and write its points.
    Trace {
        #[arg(value_enum)]
        kind: TraceKind,
        #[command(flatten)]
        common: Common,
    },
    /// Orthogonal matching pursuit steps, optionally compared with a traced path.
    Omp {
        /// Restrict candidates to coordinates whose gradient opposes the OLS sign.
        #[arg(long)]
        modified: bool,
        /// JSON path file (from `trace --format json`) to check for coincidence.
        #[arg(long)]
        against: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the structural check suite and write a JSON report.
    Verify {
        /// Directory holding ex1d.json, ex2.json, ... instead of the bundled copies.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Comma-separated check ids to run.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Write the report here instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Grid data from the scalar closed forms and the global oracles.
    Scan {
        #[command(subcommand)]
        scan: Scan,
    },
}

#[derive(Subcommand)]
pub enum Scan {
    /// `f_λ(β)` of a one-dimensional instance for several λ.
    #[command(name = "landscape-1d")]
    Landscape1d {
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.3, 0.385, 0.5])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 801)]
        points: usize,
        /// Smallest β; defaults to half of |β*| below the smaller of 0 and β*.
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Global solution of the penalized problem over a λ grid.
    GlobalQ {
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Largest λ; defaults to 1.2 times the largest per-coordinate threshold.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 121)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Global solution of the constrained problem over a c grid.
    GlobalP {
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Largest c; defaults to `F_p(β*)`.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 121)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
    /// All critical points of an orthogonal instance at one λ.
    EnumerateOrthogonal {
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceKind {
    Main,
    Greedy,
    GreedyModified,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args)]
pub struct Common {
    /// Instance JSON file.
    #[arg(long, short)]
    instance: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Override a tolerance, step-size or grid setting.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure with the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// A requested check did not pass (exit 1).
    Check(String),
    /// Bad arguments or input files (exit 2).
    Usage(String),
    /// A numerical routine failed (exit 3).
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Usage(m) | Failure::Numerical(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Trace { kind, common } => commands::trace(kind, &common),
        Command::Omp { modified, against, common } => commands::omp(modified, against.as_deref(), &common),
        Command::Verify { fixtures, only, output, overrides } => {
            commands::verify(fixtures.as_deref(), &only, output.as_deref(), &overrides)
        }
        Command::Scan { scan } => commands::scan(&scan),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
