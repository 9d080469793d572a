//! `tforge`: signature tensors, T-count optimization, training, evaluation
//! and benchmarks from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "tforge", version, about = "T-count optimization by symmetric tensor decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract the signature tensor of a CNOT+T circuit.
    Tensor(TensorArgs),
    /// Decompose one tensor (or circuit) with a single evaluation episode.
    Optimize(OptimizeArgs),
    /// Train an agent on demonstrations, self-play or both.
    Train(TrainArgs),
    /// Evaluate an agent against the baseline on an eval set.
    Eval(EvalArgs),
    /// Generate a random-circuit eval set.
    Gen(GenArgs),
    /// Run the benchmark circuits.
    Bench(BenchArgs),
    /// Check a factorization, a circuit pair or a checkpoint.
    Verify(VerifyArgs),
    /// Measure per-step training time across qubit counts.
    Time(TimeArgs),
}

#[derive(Args, Debug)]
pub struct TensorArgs {
    /// Circuit file (`qubits N`, then one gate per line).
    pub circuit: PathBuf,
    /// Output tensor file; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Cross-check streaming extraction against the truth-table path.
    #[arg(long)]
    pub verify: bool,
}

/// Agent selection and search settings shared by optimize, eval and bench.
#[derive(Args, Debug, Clone)]
pub struct AgentArgs {
    /// Trained checkpoint; the uniform prior is used when absent.
    #[arg(long, conflicts_with = "uniform")]
    pub agent: Option<PathBuf>,
    /// Use the uniform prior explicitly.
    #[arg(long)]
    pub uniform: bool,
    /// Enable Toffoli and CS gadget refunds.
    #[arg(long)]
    pub gadgets: bool,
    /// MCTS simulations per move.
    #[arg(long, default_value_t = 80)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Tensor (`.sigt`, text or binary) or circuit file.
    pub input: PathBuf,
    #[command(flatten)]
    pub agent: AgentArgs,
    /// Factorization output; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write a verified circuit realizing the factorization.
    #[arg(long)]
    pub emit_circuit: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Demo,
    Rl,
    #[value(name = "demo_rl", alias = "demo+rl")]
    DemoRl,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run directory for config.json, metrics.csv and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run config (`train`, `game`, `search`, `model` sections); flags
    /// given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Qubit range `lo..hi` (inclusive) or a single count.
    #[arg(long)]
    pub qubits: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub lr_schedule: Option<ScheduleArg>,
    #[arg(long)]
    pub gadgets: bool,
    #[arg(long)]
    pub sims: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Plant Toffoli patterns in demonstrations even without gadgets.
    #[arg(long)]
    pub plain_patterns: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Log evaluation T-counts of the benchmark circuits at each checkpoint.
    #[arg(long)]
    pub eval_fixtures: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CiArg {
    Normal,
    Bootstrap,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    /// Eval-set directory holding manifest.json.
    #[arg(long)]
    pub set: PathBuf,
    /// `internal`, or a CSV (`id,t_count`) of externally produced T-counts.
    #[arg(long, default_value = "internal")]
    pub baseline: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = CiArg::Normal)]
    pub ci: CiArg,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Qubit range `lo..hi` (inclusive) or a single count.
    #[arg(long)]
    pub qubits: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    /// Fixture directory; defaults to TFORGE_DATA or the bundled fixtures.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Tensor the factorization must reconstruct.
    #[arg(long, requires = "factors")]
    pub tensor: Option<PathBuf>,
    #[arg(long, requires = "tensor")]
    pub factors: Option<PathBuf>,
    /// Score the factorization with gadget refunds.
    #[arg(long)]
    pub gadgets: bool,
    /// Two circuits to compare up to Clifford phases.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub circuits: Option<Vec<PathBuf>>,
    /// Checkpoint whose checksum and version are checked.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TimeArgs {
    /// Comma-separated qubit counts.
    #[arg(long, default_value = "5,8,11")]
    pub qubits: String,
    /// Measured steps per qubit count.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 80)]
    pub sims: usize,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match commands::run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
