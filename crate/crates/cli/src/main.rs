//! `mfgc`: batch front end for the equilibrium solvers and contraction certificates.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "mfgc", version, about = "Multi-population mean-field game solver and contraction certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Output directory for report.json and CSV files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// JSON overrides: tol, max_iter, horizon, horizons, grid_points, variant, seed. Unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Stationary,
    Finite,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    A,
    B,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Weights,
    Decay,
    Gap,
    All,
}

#[derive(Subcommand)]
pub enum Command {
    /// Stationary and finite-horizon contraction certificates.
    Certify {
        model: PathBuf,
        /// Which certificate decides the exit code.
        #[arg(long, value_enum, default_value_t = Mode::Stationary)]
        mode: Mode,
        /// Finite-horizon variant; `both` needs both to certify [default: a].
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Horizons for the rho(S_T) samples [default: 10,50,200].
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Stationary equilibrium, or the finite-horizon one with `--horizon`.
    Solve {
        model: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        /// Residual tolerance [default: 1e-9].
        #[arg(long)]
        tol: Option<f64>,
        /// Outer iteration cap [default: 10000].
        #[arg(long)]
        max_iter: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// rho(S_T) along horizons, V and rho(B) on an r-grid, Perron ratios.
    Scan {
        model: PathBuf,
        /// [default: 3,5,10,20,50,100,200]
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Variant for the limit scan (`both` scans with a) [default: a].
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Points of the r-grid [default: 256].
        #[arg(long)]
        grid_points: Option<usize>,
        /// Also run the Perron-ratio diagnostic at this horizon (at least 50).
        #[arg(long)]
        ratio_horizon: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Schur-complement certificate for a population split, or a random campaign.
    Slowfast {
        model: Option<PathBuf>,
        /// Size of the first (slow) group of populations.
        #[arg(long)]
        split: Option<usize>,
        #[arg(long, value_enum, default_value_t = Mode::Stationary)]
        mode: Mode,
        /// Horizon for `--mode finite` [default: 20].
        #[arg(long)]
        horizon: Option<usize>,
        /// Run an equivalence campaign on this many random block matrices instead.
        #[arg(long)]
        campaign: Option<usize>,
        /// Campaign seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Lyapunov weights, horizon decay and stationary gap experiments.
    Rates {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Experiment::All)]
        experiment: Experiment,
        /// Ladder ratio for the weights [default: the minimizer of V_A].
        #[arg(long)]
        t_star: Option<f64>,
        /// Horizon of the weights [default: 40].
        #[arg(long)]
        horizon: Option<usize>,
        /// Horizons of the decay fit [default: 10,14,18,22,26].
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long, default_value_t = 70)]
        t_ref: usize,
        #[arg(long, default_value_t = 3)]
        t_probe: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,20,40")]
        k_list: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        t_big: usize,
        /// [default: 1e-12]
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("MFGC_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring MFGC_THREADS={v}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let code = commands::run(cli.command);
    ExitCode::from(code as u8)
}
