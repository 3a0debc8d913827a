//! Command-line front end for the lambda-shelve library.
//!
//! Exit codes: 0 success, 1 usage/configuration errors, 2 numerical
//! failures, 3 a `compare` run whose tolerances were violated.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::scan::ScanArgs;
use commands::Ctx;
use config::{GridSpacing, Overlay};
use lambda_shelve::CoreError;
use output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "lambda-shelve",
    version,
    about = "Counting statistics and quantum-jump simulation for a driven \
             three-level lambda atom under continuous photon detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Config file: `key = value` lines, or a JSON object for .json paths
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write output here instead of stdout; `simulate` derives
    /// <stem>.events.csv and <stem>.summary.json from this path
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Table format (default: csv)
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Also write an SVG chart of the tabulated series to this path
    /// (density and scan only)
    #[arg(long, global = true, value_name = "PATH")]
    plot: Option<PathBuf>,

    #[command(flatten)]
    overrides: OverrideArgs,
}

/// Every config-file key doubles as a flag; flags win over the file.
#[derive(Debug, Args)]
struct OverrideArgs {
    /// Rabi frequency of the strong (blue) transition
    #[arg(long, global = true, allow_negative_numbers = true)]
    omega1: Option<f64>,
    /// Rabi frequency of the weak (red) transition
    #[arg(long, global = true, allow_negative_numbers = true)]
    omega2: Option<f64>,
    /// Detuning of the strong transition
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta1: Option<f64>,
    /// Detuning of the weak transition
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta2: Option<f64>,
    /// Decay rate into the blue channel
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma1: Option<f64>,
    /// Decay rate into the red channel
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma2: Option<f64>,
    /// Number of trajectories
    #[arg(long, global = true)]
    n: Option<u64>,
    /// Simulation horizon
    #[arg(long, global = true, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Base RNG seed (trajectory i uses stream i)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Initial lower level (1 or 2)
    #[arg(long, global = true)]
    initial: Option<u8>,
    /// Lower end of the density time grid
    #[arg(long, global = true, allow_negative_numbers = true)]
    t_min: Option<f64>,
    /// Upper end of the density time grid
    #[arg(long, global = true, allow_negative_numbers = true)]
    t_max: Option<f64>,
    /// Number of density grid points
    #[arg(long, global = true)]
    grid_points: Option<u64>,
    /// Density grid spacing (a log grid needs a positive t-min)
    #[arg(long, global = true, value_enum)]
    grid: Option<GridSpacing>,
    /// Waiting-time draws per Kolmogorov-Smirnov check
    #[arg(long, global = true)]
    ks_samples: Option<u64>,
    /// Long/short classification threshold (default: from the analytic split)
    #[arg(long, global = true, allow_negative_numbers = true)]
    theta: Option<f64>,
}

impl Cli {
    /// Overlay built from everything given on the command line.
    fn flag_overlay(&self) -> Overlay {
        Overlay {
            omega1: self.overrides.omega1,
            omega2: self.overrides.omega2,
            delta1: self.overrides.delta1,
            delta2: self.overrides.delta2,
            gamma1: self.overrides.gamma1,
            gamma2: self.overrides.gamma2,
            n: self.overrides.n,
            horizon: self.overrides.horizon,
            seed: self.overrides.seed,
            initial: self.overrides.initial,
            t_min: self.overrides.t_min,
            t_max: self.overrides.t_max,
            grid_points: self.overrides.grid_points,
            grid: self.overrides.grid,
            ks_samples: self.overrides.ks_samples,
            theta: self.overrides.theta,
            out: self.out.clone(),
            format: self.format,
            plot: self.plot.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Exact characteristic roots next to the perturbative approximations
    Roots,
    /// Survival probabilities and click densities on a uniform time grid
    Density,
    /// Simulate an ensemble; writes <stem>.events.csv and <stem>.summary.json
    Simulate,
    /// Check a fresh simulation against the analytic predictions
    Compare,
    /// Sweep one parameter; tabulate slow weight, time scales and emission
    Scan(ScanArgs),
}

/// Terminal state of a successful run.
pub enum Outcome {
    Clean,
    /// `compare` wrote its table but at least one metric failed.
    ToleranceFailed,
}

pub struct AppError {
    pub code: u8,
    pub message: String,
}

impl AppError {
    pub fn usage(message: impl Into<String>) -> Self {
        AppError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::InvalidParams { .. } | CoreError::UnsortedRecord { .. } => 1,
            _ => 2,
        };
        AppError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError {
            code: 1,
            message: format!("i/o error: {e}"),
        }
    }
}

fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("LAMBDA_SHELVE_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        raw.trim().parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
            format!("LAMBDA_SHELVE_THREADS must be a positive integer, got `{raw}`")
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("thread pool setup failed: {e}"))
}

fn dispatch(cli: Cli) -> Result<Outcome, AppError> {
    let file_overlay = match &cli.config {
        Some(path) => Overlay::from_file(path).map_err(AppError::usage)?,
        None => Overlay::default(),
    };
    let cfg = cli
        .flag_overlay()
        .over(file_overlay)
        .resolve()
        .map_err(AppError::usage)?;
    let ctx = Ctx::new(cfg);
    match cli.command {
        Cmd::Roots => commands::roots::run(&ctx),
        Cmd::Density => commands::density::run(&ctx),
        Cmd::Simulate => commands::simulate::run(&ctx),
        Cmd::Compare => commands::compare::run(&ctx),
        Cmd::Scan(args) => commands::scan::run(&ctx, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(message) = init_thread_pool() {
        eprintln!("error: {message}");
        return ExitCode::from(1);
    }
    match dispatch(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
