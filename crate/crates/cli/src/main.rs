//! `mcm`: experiment harness for the package cost model. Subcommands
//! evaluate one workload (`model`), compare optimizers (`optimize`),
//! schedule batched runs (`pipeline`), replay link scenarios
//! (`simulate`), and run the full comparison matrix (`sweep`).

mod config;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "mcm",
    version,
    about = "Cost modeling and schedule optimization for multi-chip-module accelerators"
)]
struct Cli {
    /// Experiment config file (TOML); flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the cost model and print the breakdown as JSON.
    Model(ModelArgs),
    /// Compare optimizers on one workload; writes a normalized CSV.
    Optimize(OptimizeArgs),
    /// Schedule a batched pipeline; writes the schedule as CSV.
    Pipeline(PipelineArgs),
    /// Replay a bandwidth scenario; writes a link-utilization CSV.
    Simulate(SimulateArgs),
    /// Run the grid x type x memory comparison matrix; writes a CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Uniform,
    Simba,
    Ga,
    Miqp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Latency,
    Edp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    List,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Dram,
    HbmPeriph,
    HbmCentral,
}

/// Workload selection shared by every evaluating subcommand.
#[derive(Args)]
pub struct WorkloadArgs {
    /// Workload file (TOML op list).
    #[arg(long, value_name = "FILE", conflicts_with = "task")]
    pub workload: Option<PathBuf>,
    /// Bundled workload name (e.g. alexnet-mini, gemm-chain-4).
    #[arg(long, value_name = "NAME")]
    pub task: Option<String>,
}

#[derive(Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub source: WorkloadArgs,
    /// Partitioning whose cost to report.
    #[arg(long, value_enum, default_value_t = OptimizerArg::Uniform)]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Latency)]
    pub objective: ObjectiveArg,
    /// Enable on-package redistribution between chained ops.
    #[arg(long)]
    pub redistribute: bool,
    /// Overlap each op's compute with the next op's load.
    #[arg(long)]
    pub async_fuse: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver budget in seconds (miqp only).
    #[arg(long, value_name = "S")]
    pub time_limit: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub source: WorkloadArgs,
    /// Optimizers to run, comma separated.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = [OptimizerArg::Uniform, OptimizerArg::Simba, OptimizerArg::Ga]
    )]
    pub optimizer: Vec<OptimizerArg>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Latency)]
    pub objective: ObjectiveArg,
    /// Enable on-package redistribution between chained ops.
    #[arg(long)]
    pub redistribute: bool,
    /// Overlap each op's compute with the next op's load.
    #[arg(long)]
    pub async_fuse: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver budget in seconds (miqp only).
    #[arg(long, value_name = "S")]
    pub time_limit: Option<f64>,
    /// Exit 2 when a solver returns a timeout instead of a proof.
    #[arg(long)]
    pub strict: bool,
    /// Write the exact-solver model in LP format.
    #[arg(long, value_name = "FILE")]
    pub lp_export: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub source: WorkloadArgs,
    /// Samples scheduled through the package.
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::List)]
    pub method: MethodArg,
    /// Load each op's weights once and share them across samples.
    #[arg(long)]
    pub weights_resident: bool,
    /// Enable on-package redistribution between chained ops.
    #[arg(long)]
    pub redistribute: bool,
    /// Overlap each op's compute with the next op's load.
    #[arg(long)]
    pub async_fuse: bool,
    /// Partitioning scheduled for each op.
    #[arg(long, value_enum, default_value_t = OptimizerArg::Uniform)]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Latency)]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search budget in seconds (exact method and miqp).
    #[arg(long, value_name = "S")]
    pub time_limit: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Package link bandwidth in GB/s.
    #[arg(long, default_value_t = 60.0)]
    pub nop_gbps: f64,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: WorkloadArgs,
    /// Square grid sides to sweep. 16 is accepted but not a default:
    /// the exact solver is out of reach there.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8])]
    pub grids: Vec<usize>,
    /// Optimizers to run, comma separated; miqp only on request.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = [OptimizerArg::Uniform, OptimizerArg::Simba, OptimizerArg::Ga]
    )]
    pub optimizer: Vec<OptimizerArg>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Latency)]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver budget in seconds (miqp only).
    #[arg(long, value_name = "S")]
    pub time_limit: Option<f64>,
    /// Concurrent sweep cells; defaults to the number of cores.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Exit 2 when a solver returns a timeout instead of a proof.
    #[arg(long)]
    pub strict: bool,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let exp = match &cli.config {
        Some(path) => match config::load(path) {
            Ok(exp) => exp,
            Err(e) => {
                eprintln!("config error: {e:#}");
                std::process::exit(1);
            }
        },
        None => config::Experiment::default(),
    };
    let outcome = match &cli.command {
        Command::Model(args) => run::model(&exp, args),
        Command::Optimize(args) => run::optimize(&exp, args),
        Command::Pipeline(args) => run::pipeline(&exp, args),
        Command::Simulate(args) => run::simulate(&exp, args),
        Command::Sweep(args) => run::sweep(&exp, args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
