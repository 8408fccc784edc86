//! `pfnn`: solve power flows, generate training data, train the surrogate
//! and compare it with the DC approximation.
//!
//! Exit codes: 0 success, 1 input/validation/I/O error, 2 AC power flow did
//! not converge, 3 training diverged or sample generation kept failing.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "pfnn",
    version,
    about = "Power-flow solvers and a neural-network surrogate"
)]
struct Cli {
    /// Log more detail to stderr (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the AC power flow of a case file (Newton-Raphson by default).
    SolveAc(SolveAcArgs),
    /// Solve the DC approximation of a case file.
    SolveDc(SolveDcArgs),
    /// Generate a labelled sample set by perturbing the base case.
    GenData(GenDataArgs),
    /// Train a surrogate on a sample set.
    Train(TrainArgs),
    /// Report test-split accuracy of a trained model.
    Eval(EvalArgs),
    /// Compare a trained model and the DC approximation against AC labels.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SolveAcArgs {
    pub case: PathBuf,
    /// Convergence tolerance on the largest mismatch, pu.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Use Gauss-Seidel instead of Newton-Raphson.
    #[arg(long)]
    pub gs: bool,
    /// Write the solution here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct SolveDcArgs {
    pub case: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    pub case: PathBuf,
    /// Number of samples [default: 10000]
    #[arg(long)]
    pub count: Option<usize>,
    /// Half-width of the uniform load perturbation [default: 0.1]
    #[arg(long)]
    pub perturb: Option<f64>,
    /// [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep generator voltage setpoints at their base values.
    #[arg(long)]
    pub no_voltage_perturb: bool,
    /// Output file [default: <case>.pfds.json]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    /// [default: 600]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0.05]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 64]
    #[arg(long)]
    pub batch: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, comma separated [default: 64,64,64,64,64]
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Leaky ReLU slope for negative inputs [default: 0.01]
    #[arg(long)]
    pub leak: Option<f64>,
    /// Train separate networks for voltages and flows.
    #[arg(long)]
    pub separate_heads: bool,
    /// [default: 0.1]
    #[arg(long)]
    pub val_ratio: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    pub test_ratio: Option<f64>,
    /// Print a progress line every N epochs (0 disables).
    #[arg(long, default_value_t = 50)]
    pub progress_every: usize,
    /// Checkpoint file [default: <dataset>.pfnn.json]; the trace CSV is
    /// written next to it.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub model: PathBuf,
    pub dataset: PathBuf,
    /// Loading levels in MW, comma separated [default: 50,100,150,200]
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Report path prefix; `.txt`, `.json` and `.csv` are appended
    /// [default: <model>.report]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::SolveAc(a) => commands::solve_ac(a),
        Command::SolveDc(a) => commands::solve_dc(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
