//! `realmix`: generate data, prepare splits, train, evaluate and run
//! multi-seed experiments.

mod commands;
mod manifest;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{evaluate, experiment, generate, prepare, report, train};
use util::UsageError;

#[derive(Parser, Debug)]
#[command(name = "realmix", version, about = "Semi-supervised image classification toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// Config file (JSON). Defaults to the desk-scale configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Existing results are never overwritten.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for splits, initialization and every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training runs executed concurrently by `experiment`.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Config override `key=value`; dotted keys reach nested fields.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the procedural desk-scale dataset.
    Generate(generate::GenerateArgs),
    /// Write a label split, its config and the extended unlabeled pool.
    Prepare(prepare::PrepareArgs),
    /// Train one model.
    Train(train::TrainArgs),
    /// Evaluate a trained model on a test set.
    Evaluate(evaluate::EvaluateArgs),
    /// Run a multi-seed experiment and write its report.
    Experiment(experiment::ExperimentArgs),
    /// Print or re-emit an experiment report.
    Report(report::ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Experiment(_) => "experiment",
            Command::Report(_) => "report",
        }
    }
}

fn init_logging(global: &Global) {
    let level = match (global.quiet, global.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
}

/// 2 for bad input, 3 for failures while running.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<realmix::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.global);
    let g = &cli.global;
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Generate(a) => generate::run(g, a),
        Command::Prepare(a) => prepare::run(g, a),
        Command::Train(a) => train::run(g, a),
        Command::Evaluate(a) => evaluate::run(g, a),
        Command::Experiment(a) => experiment::run(g, a),
        Command::Report(a) => report::run(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("realmix {name}: error: {err:#}");
            ExitCode::from(code)
        }
    }
}
