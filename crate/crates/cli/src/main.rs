//! Command-line harness: trace ingestion, training runs, statistical
//! comparison and transfer experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or data-format
//! error, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cloudscale::harness::{
    self, compare_runs, config::parse_seed_list, run_experiment, transfer_experiment,
    AgentKind, ExperimentConfig,
};
use cloudscale::trace;
use cloudscale::Error;

#[derive(Parser)]
#[command(name = "cloudscale", version, about = "Trace-driven cloud autoscaling RL workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin a raw connection trace (or re-scale a binned one) into a schedule CSV.
    Ingest(IngestArgs),
    /// Train/evaluate an agent on a simulated environment.
    Train(TrainArgs),
    /// Compare two run CSVs on an epoch metric with a paired t-test.
    Compare(CompareArgs),
    /// Warm-start the fidelity simulator from fast-simulator weights and
    /// compare against a cold start.
    Transfer(TransferArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Raw trace (timestamp-first lines) or binned CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Interval length in seconds.
    #[arg(long, default_value_t = 300)]
    interval: u32,
    /// Count multiplier applied after binning.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Output schedule CSV (`interval_index,count`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override: agent kind (threshold|qtable|dqn|d3qn).
    #[arg(long)]
    agent: Option<String>,
    /// Override: environment backend (fast|fidelity).
    #[arg(long)]
    env: Option<String>,
    /// Override: number of epochs.
    #[arg(long)]
    epochs: Option<u32>,
    /// Override: comma-separated seed list.
    #[arg(long)]
    seed: Option<String>,
    /// Override: warm-start weight file (dqn/d3qn only).
    #[arg(long)]
    init_weights: Option<PathBuf>,
    /// Override: output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Truncate the schedule to its first 3 days.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// First run's epochs.csv.
    #[arg(long)]
    a: PathBuf,
    /// Second run's epochs.csv.
    #[arg(long)]
    b: PathBuf,
    /// Epoch-summary column to compare.
    #[arg(long, default_value = "mean_reward")]
    metric: String,
}

#[derive(Args)]
struct TransferArgs {
    /// Weight file trained on the fast simulator.
    #[arg(long)]
    source_weights: PathBuf,
    /// Experiment config targeting the fidelity backend.
    #[arg(long)]
    config: PathBuf,
    /// Override: output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Parse { .. } | Error::Weights(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Train(args) => train(args),
        Command::Compare(args) => compare(args),
        Command::Transfer(args) => transfer(args),
    }
}

fn ingest(args: IngestArgs) -> Result<(), Error> {
    let schedule = trace::load_schedule(&args.trace, args.interval)?;
    let schedule = if args.scale == 1.0 {
        schedule
    } else {
        schedule.scaled(args.scale)?
    };
    trace::write_schedule_csv(&schedule, &args.out)?;
    println!(
        "wrote {} intervals ({} events) to {}",
        schedule.len(),
        schedule.counts().iter().sum::<u64>(),
        args.out.display()
    );
    Ok(())
}

fn apply_train_overrides(cfg: &mut ExperimentConfig, args: &TrainArgs) -> Result<(), Error> {
    if let Some(agent) = &args.agent {
        cfg.agent = AgentKind::parse(agent)?;
    }
    if let Some(env) = &args.env {
        cfg.backend = harness::config::parse_backend(env)?;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(seed) = &args.seed {
        cfg.seeds = parse_seed_list(seed)?;
    }
    if let Some(weights) = &args.init_weights {
        cfg.init_weights = Some(weights.clone());
    }
    if let Some(out_dir) = &args.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if args.quick {
        cfg.quick = true;
    }
    cfg.validate()
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    apply_train_overrides(&mut cfg, &args)?;
    let result = run_experiment(&cfg)?;
    println!("experiment: {}", result.label);
    println!("seed,epochs,final_mean_reward,final_mean_cpu,final_mean_instances,total_cost");
    for run in &result.runs {
        let last = run.epochs.last().expect("at least one epoch");
        let cost: f64 = run.epochs.iter().map(|e| e.total_cost).sum();
        println!(
            "{},{},{},{},{},{}",
            run.seed,
            run.epochs.len(),
            last.mean_reward,
            last.mean_cpu,
            last.mean_instances,
            cost
        );
    }
    println!("outputs under {}", cfg.out_dir.join(result.label).display());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let report = compare_runs(&args.a, &args.b, &args.metric)?;
    print!("{}", report.render());
    Ok(())
}

fn transfer(args: TransferArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out_dir) = &args.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    let report = transfer_experiment(&cfg, &args.source_weights)?;
    print!("{}", report.render());
    Ok(())
}
