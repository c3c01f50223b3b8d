//! `pkt`: probabilistic knowledge transfer from the command line.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pkt",
    version,
    about = "Probabilistic knowledge transfer between feature spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a student network to match the teacher's conditional affinities.
    Transfer(TransferArgs),
    /// Run a trained student over a feature file.
    Embed(EmbedArgs),
    /// Retrieval evaluation: interpolated mAP and top-k precision.
    Eval(EvalArgs),
    /// Information potentials and quadratic mutual information.
    Qmi(QmiArgs),
    /// Compare the analytic loss gradient against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Cosine,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradcheckKernel {
    Cosine,
    Gaussian,
    Both,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Raw student inputs (feature file).
    #[arg(long)]
    pub input: std::path::PathBuf,
    /// Teacher representations, row-aligned with --input.
    #[arg(long)]
    pub teacher: std::path::PathBuf,
    /// Layer widths after the input, e.g. `64,8`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub arch: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Kernel for both teacher and student affinities.
    #[arg(long, value_enum, default_value_t = KernelArg::Cosine)]
    pub kernel: KernelArg,
    /// Teacher Gaussian width (the whole exponent denominator, 2σ²).
    #[arg(long)]
    pub sigma_t: Option<f64>,
    /// Student Gaussian width (the whole exponent denominator, 2σ²).
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Class labels; required when --sup-weight > 0.
    #[arg(long)]
    pub labels: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub sup_weight: f64,
    /// Seeds both initialization and epoch shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Write `epoch batch loss` lines here.
    #[arg(long)]
    pub loss_log: Option<std::path::PathBuf>,
    /// Log the running loss every N batches (needs PKT_LOG=info).
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub input: std::path::PathBuf,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub db: std::path::PathBuf,
    #[arg(long)]
    pub db_labels: std::path::PathBuf,
    #[arg(long)]
    pub queries: std::path::PathBuf,
    #[arg(long)]
    pub query_labels: std::path::PathBuf,
    /// Cutoffs for top-k precision, e.g. `10,50`; none by default.
    #[arg(long, value_delimiter = ',')]
    pub top_k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct QmiArgs {
    #[arg(long)]
    pub features: std::path::PathBuf,
    #[arg(long)]
    pub labels: std::path::PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Cosine)]
    pub kernel: KernelArg,
    /// Gaussian width (the whole exponent denominator, 2σ²).
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per instance; drawn from 4..=12 when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Student dimension; drawn from 2..=8 when omitted.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = GradcheckKernel::Both)]
    pub kernel: GradcheckKernel,
    /// Random instances per kernel family.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, hide = true)]
    pub corrupt_sign: bool,
}

fn init_logging() {
    let level = match std::env::var("PKT_LOG").as_deref() {
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Off,
    };
    env_logger::Builder::new().filter_level(level).init();
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
    init_logging();

    let result = match cli.command {
        Command::Transfer(a) => commands::transfer(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Qmi(a) => commands::qmi(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
