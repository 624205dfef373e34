//! `fw-merge`: merge a checkpoint pool with Frank-Wolfe, or run the toy
//! scaling and relevance experiments.
//!
//! Exit codes: 0 on success, 2 on configuration or input errors, 3 on
//! numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fw_merge::checkpoint::{load_checkpoint, save_checkpoint};
use fw_merge::fw::{run_fw, FWConfig, LambdaGranularity, LmoGranularity, Variant};
use fw_merge::harness::{run_relevance, run_scaling, ExperimentConfig, ObjectiveSpec};
use fw_merge::{CheckpointPool, Error, SimplexMode};

#[derive(Parser)]
#[command(name = "fw-merge", version, about = "Frank-Wolfe merging of fine-tuned checkpoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge every checkpoint in a pool directory.
    Merge(MergeArgs),
    /// Run a pool-size sweep and write report.csv plus traces.
    Scaling {
        /// Experiment config (JSON).
        config: PathBuf,
    },
    /// Score every planned checkpoint against each evaluation task's gradient.
    Relevance {
        /// Experiment config (JSON).
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Hard,
    Soft,
}

#[derive(Clone, Copy, ValueEnum)]
enum LmoArg {
    Task,
    Layer,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimplexArg {
    Unit,
    Capped,
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaArg {
    Scalar,
    Layer,
}

#[derive(Args)]
struct MergeArgs {
    /// Directory of .fwck checkpoints.
    #[arg(long)]
    pool: PathBuf,
    /// Initial model.
    #[arg(long)]
    base: PathBuf,
    /// Objective spec (JSON).
    #[arg(long)]
    objective: PathBuf,
    #[arg(long, value_enum, default_value = "hard")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "task")]
    lmo: LmoArg,
    /// Soft top-k (defaults to min(4, pool size)).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "unit")]
    simplex: SimplexArg,
    /// Soft merging weights per vertex or per vertex and layer.
    #[arg(long, value_enum, default_value = "scalar")]
    lambda: LambdaArg,
    #[arg(long, default_value_t = 21)]
    line_search_points: usize,
    #[arg(long, default_value_t = 50)]
    inner_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    inner_lr: f64,
    /// Where to write the merged checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the JSONL trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl MergeArgs {
    fn fw_config(&self) -> FWConfig {
        FWConfig {
            variant: match self.variant {
                VariantArg::Hard => Variant::Hard,
                VariantArg::Soft => Variant::Soft,
            },
            lmo: match self.lmo {
                LmoArg::Task => LmoGranularity::Task,
                LmoArg::Layer => LmoGranularity::Layer,
            },
            budget: self.budget,
            epsilon: self.epsilon,
            k: self.k,
            inner_steps: self.inner_steps,
            inner_lr: self.inner_lr,
            simplex_mode: match self.simplex {
                SimplexArg::Unit => SimplexMode::Unit,
                SimplexArg::Capped => SimplexMode::Capped,
            },
            lambda_granularity: match self.lambda {
                LambdaArg::Scalar => LambdaGranularity::Scalar,
                LambdaArg::Layer => LambdaGranularity::Layer,
            },
            line_search_points: self.line_search_points,
            ..FWConfig::default()
        }
    }
}

fn merge(args: &MergeArgs) -> fw_merge::Result<()> {
    let pool = CheckpointPool::from_dir(&args.pool)?;
    let base = load_checkpoint(&args.base)?;
    let objective = ObjectiveSpec::load(&args.objective)?.build(&base)?;
    let cfg = args.fw_config();
    let res = run_fw(&cfg, &pool, objective.as_ref(), &base)?;
    save_checkpoint(&res.merged, &args.out)?;
    if let Some(trace) = &args.trace {
        res.write_trace(trace)?;
    }
    log::info!(
        "stopped after {} iterations ({:?}); final loss {:?}",
        res.trace.len(),
        res.stop_reason,
        res.final_loss()
    );
    Ok(())
}

fn run(cli: &Cli) -> fw_merge::Result<()> {
    match &cli.command {
        Command::Merge(args) => merge(args),
        Command::Scaling { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = run_scaling(&cfg)?;
            println!("{}", out.report_path.display());
            Ok(())
        }
        Command::Relevance { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = run_relevance(&cfg)?;
            println!("{}", out.matrix_path.display());
            println!("own checkpoint minimal for {:.3} of tasks", out.own_minimal_fraction());
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fw-merge: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
