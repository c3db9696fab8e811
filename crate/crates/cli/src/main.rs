//! `ha-array`: fit cell-means models, run simulation studies, diagnose chains.

mod diagnose;
mod fit;
mod manifest;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ha-array", version, about = "Hierarchical array priors for cross-classified data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a long-format CSV.
    Fit(FitArgs),
    /// Run a simulation study from a key=value config.
    Simulate(SimulateArgs),
    /// Convergence summaries of chain files.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Ha,
    Sb,
    Aols,
    Asb,
    Ols,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TransformArg {
    None,
    QuarterPower,
}

#[derive(clap::Args)]
pub struct FitArgs {
    /// Long-format CSV; overrides `data` in the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// key=value config naming factor and response columns.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub transform: Option<TransformArg>,
    /// Center and scale each response column before fitting.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(clap::Args)]
pub struct DiagnoseArgs {
    /// Chain CSV files.
    #[arg(required = true)]
    pub chains: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Autocorrelation lag.
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
}

/// Problems with the invocation, config or input files (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ha_array::Error>() {
            if matches!(e, ha_array::Error::Config(_) | ha_array::Error::Malformed { .. }) {
                return 2;
            }
        }
    }
    1
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("HA_ARRAY_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("HA_ARRAY_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Fit(args) => fit::run(&args),
        Command::Simulate(args) => simulate::run(&args),
        Command::Diagnose(args) => diagnose::run(&args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
