use std::path::PathBuf;
use std::process::ExitCode;

use cfm_cli::{CliError, ExperimentConfig, Overrides, Task, EXIT_CONFIG};
use cfm_core::learning::Scale;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Causal fair metric experiments driven by JSON configs.
#[derive(Parser)]
#[command(name = "cfm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample instances from each model and write them as CSV.
    GenData(RunArgs),
    /// Train embedding metrics and evaluate them against the oracle.
    TrainMetric(RunArgs),
    /// Evaluate saved metric checkpoints.
    EvalMetric(RunArgs),
    /// Train classifiers and evaluate fairness and robustness.
    TrainClf(RunArgs),
    /// Evaluate saved classifier checkpoints.
    EvalClf(RunArgs),
    /// Train the classifier matrix and write aggregate tables and plot data.
    Report(RunArgs),
    /// Run whatever task the config names.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Output directory, replacing the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list, replacing the config's; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

fn execute(command: Command) -> Result<cfm_cli::RunSummary, CliError> {
    let (task, args) = match command {
        Command::GenData(a) => (Some(Task::GenData), a),
        Command::TrainMetric(a) => (Some(Task::TrainMetric), a),
        Command::EvalMetric(a) => (Some(Task::EvalMetric), a),
        Command::TrainClf(a) => (Some(Task::TrainClf), a),
        Command::EvalClf(a) => (Some(Task::EvalClf), a),
        Command::Report(a) => (Some(Task::Report), a),
        Command::Run(a) => (None, a),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(&Overrides {
        task,
        output: args.out,
        seeds: args.seeds,
        preset: args.preset.map(|p| match p {
            Preset::Desk => Scale::Desk,
            Preset::Paper => Scale::Paper,
        }),
    });
    cfm_cli::run(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            eprint!("{msg}");
            eprintln!(
                "{}",
                serde_json::json!({"error": "Usage", "exit_code": EXIT_CONFIG, "message": msg.trim()})
            );
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
