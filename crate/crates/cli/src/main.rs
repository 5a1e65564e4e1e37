//! `modscale`: theory curves, linear simulations, task generation, module
//! initialization, training, evaluation and sample-complexity sweeps.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, configs, missing
//! files), 2 runtime failure. The resolved manifest of every run goes to
//! standard error; data goes to `-o` or standard output.

mod commands;
mod keys;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Relative output paths are resolved against this directory when set.
pub const OUT_DIR_ENV: &str = "MODSCALE_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "modscale", version, about = "Sample-complexity experiments for modular and monolithic learners")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON config file.
    #[arg(long, short = 'c', value_name = "FILE")]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set train.lr=0.01`. Values are parsed
    /// as JSON, falling back to strings. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Kernel,
    GroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Mse,
    Accuracy,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form train and test loss curves over an (n, p) grid.
    #[command(after_help = keys::CURVE)]
    TheoryCurve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output file (.csv or .json); standard output as CSV when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo linear-regression losses over the same grid schema.
    #[command(after_help = keys::CURVE)]
    SimulateLinear {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generates a task with train and test data as a JSON task file.
    #[command(after_help = keys::GEN_TASK)]
    GenTask {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learns one projection per module with the kernel objective.
    #[command(after_help = keys::INIT_MODULES)]
    InitModules {
        #[command(flatten)]
        config: ConfigArgs,
        /// Task file from `gen-task`.
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trains a network on a task file and writes a checkpoint.
    #[command(after_help = keys::TRAIN)]
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// How modular projections are initialized.
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        /// Projections file from `init-modules`, for `--init kernel`.
        #[arg(long)]
        projections: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluates a checkpoint on the test split of a task file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to mse for regression and accuracy for classification.
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runs an experiment grid, searching for sample complexity when the
    /// config has a `search` section.
    #[command(after_help = keys::EXPERIMENT)]
    SampleComplexity {
        #[command(flatten)]
        config: ConfigArgs,
        /// Results file (.csv or .json); standard output as CSV when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// JSONL log of finished grid points, used to resume interrupted runs.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Scores learned module directions against a task's planted ones.
    Similarity {
        /// Checkpoint of a modular network or a projections file.
        #[arg(long)]
        learned: PathBuf,
        /// Task file of a sine task.
        #[arg(long)]
        targets: PathBuf,
    },
    /// Fits spectrum constants (c, Ω) and the parameter scale α to observed
    /// losses.
    #[command(after_help = keys::FIT)]
    FitTheory {
        /// Records as CSV or a JSON array.
        #[arg(long)]
        records: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Monte Carlo trials for F(n, p) near n = p.
        #[arg(long, default_value_t = 10_000)]
        mc_trials: usize,
        #[arg(long, default_value_t = 0)]
        mc_seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
