//! `dspca` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 data-shape mismatch,
//! 4 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dspca::error::ErrorClass;
use dspca::DspcaError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser, Serialize)]
#[command(name = "dspca", version, about = "Dynamic supervised PCA classification")]
pub struct Cli {
    /// Output directory for every artifact.
    #[arg(long, global = true, env = "DSPCA_OUT_DIR", default_value = "dspca-out")]
    pub out_dir: PathBuf,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Select bandwidths and (rho, K) on a training CSV.
    Tune(TuneArgs),
    /// Classify a test CSV with tuned parameters.
    Predict(PredictArgs),
    /// Split a CSV and keep the top features by two-sample t-statistic.
    Screen(ScreenArgs),
    /// Run the Monte-Carlo benchmark on a built-in model.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a config.json echo.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SchemaArgs {
    #[arg(long, default_value = "y")]
    pub label_column: String,
    #[arg(long, default_value = "u")]
    pub index_column: String,
    /// Comma-separated feature columns; default is every other column.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// lda or qda.
    #[arg(long, default_value = "lda")]
    pub variant: String,
    #[arg(long, default_value_t = 5)]
    pub kmax: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated rho grid; default is exp(-1), ..., exp(6).
    #[arg(long, value_delimiter = ',')]
    pub rhos: Option<Vec<f64>>,
    /// Comma-separated bandwidth grid for leave-one-out selection.
    #[arg(long, value_delimiter = ',')]
    pub bandwidth_grid: Option<Vec<f64>>,
    /// Use this bandwidth everywhere instead of leave-one-out selection.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the index on its raw scale.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// params.json written by `tune`.
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScreenArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Number of features to keep.
    #[arg(long)]
    pub p_keep: usize,
    /// Hold out this fraction per class before screening.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Model id 1..=6.
    #[arg(long)]
    pub model: u8,
    /// Comma-separated dimensions, one table row each.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Observations per class in both training and test sets.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Comma-separated subset of oracle, dspcalda, dspcaqda.
    #[arg(long, value_delimiter = ',', default_value = "oracle,dspcalda,dspcaqda")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub kmax: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub config: PathBuf,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<DspcaError> for CliError {
    fn from(e: DspcaError) -> Self {
        let code = match e.class() {
            ErrorClass::Input => 2,
            ErrorClass::Shape => 3,
            ErrorClass::Numerical => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        // a second call (after replay) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Replay(r) => {
            let argv = commands::load_replay_argv(&r.config)?;
            let replayed = Cli::try_parse_from(&argv).map_err(|e| CliError::input(e.to_string()))?;
            if matches!(replayed.command, Command::Replay(_)) {
                return Err(CliError::input("a replay config cannot itself be a replay"));
            }
            run(replayed, argv)
        }
        Command::Tune(a) => commands::tune(&cli, a, &argv),
        Command::Predict(a) => commands::predict(&cli, a, &argv),
        Command::Screen(a) => commands::screen(&cli, a, &argv),
        Command::Simulate(a) => commands::simulate(&cli, a, &argv),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
