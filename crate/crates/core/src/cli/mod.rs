//! Command-line front end. Every subcommand reads one [`ExperimentConfig`],
//! writes its outputs under the output directory and logs to standard error.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error. Errors
//! print one `ERROR <exit code>: <message>` line on standard error.
//!
//! The root seed is `--seed`, else `SEQCHOICE_SEED`, else the config `seed`.
//! Task seeds are `derive_seed(root, task_id)`; task ids are listed in the
//! config documentation.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{
    BalanceSection, DataSection, ExperimentConfig, GameSection, GenerateSection, GenerativeKind, SelectSection,
    StatsSection,
};

use crate::data::{ResourceKind, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const SEED_ENV: &str = "SEQCHOICE_SEED";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }

    pub(crate) fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "seqchoice",
    version,
    about = "Occupant resource-usage modeling: features, selection, classifiers, simulation and statistics",
    arg_required_else_help = true
)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides SEQCHOICE_SEED and the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is the reference mode, results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset CSV and write its canonical form.
    Ingest {
        /// Dataset CSV; defaults to `data.path`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a planted signal.
    Synth,
    /// Write the pooled feature matrix with per-resource labels.
    Featurize {
        #[arg(long)]
        scenario: Option<Scenario>,
    },
    /// Rank features by mRMR for one resource.
    Select {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        resource: Option<ResourceKind>,
        #[arg(long)]
        occupant: Option<String>,
    },
    /// SMOTE-balance the selected training features of one resource.
    Balance {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        resource: Option<ResourceKind>,
        #[arg(long)]
        occupant: Option<String>,
    },
    /// Fit per-occupant agent profiles (best model per resource).
    Train {
        #[arg(long)]
        scenario: Option<Scenario>,
    },
    /// Train the roster per occupant and resource and report test AUC.
    Evaluate {
        #[arg(long)]
        scenario: Option<Scenario>,
    },
    /// Play the fitted agents over the stream dates.
    Simulate {
        /// Profiles JSON from `train`; fitted afresh when absent.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Train generative trace models and validate them with DTW.
    Generate {
        #[arg(long)]
        occupant: Option<String>,
    },
    /// Savings tables and survey consistency.
    Stats {
        #[arg(long)]
        survey: Option<PathBuf>,
    },
}

/// Runs one invocation; `argv[0]` is the program name. Returns the exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with_env(argv, std::env::var(SEED_ENV).ok())
}

/// [`run_command`] with the seed variable passed explicitly.
pub fn run_with_env<I, S>(argv: I, env_seed: Option<String>) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    let msg = if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        "missing subcommand".to_string()
                    } else {
                        e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string()
                    };
                    eprintln!("ERROR {EXIT_USAGE}: {msg}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, env_seed) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code(), e.message());
            e.code()
        }
    }
}

fn execute(cli: Cli, env_seed: Option<String>) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let root_seed = match (cli.seed, env_seed) {
        (Some(s), _) => s,
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?,
        (None, None) => cfg.seed,
    };
    let threads = cli.jobs.unwrap_or(0);
    if cli.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    let ctx = commands::Ctx { cfg, root_seed };
    pool.install(|| match cli.command {
        Command::Ingest { input } => commands::ingest(&ctx, input),
        Command::Synth => commands::synth(&ctx),
        Command::Featurize { scenario } => commands::featurize(&ctx, scenario),
        Command::Select { scenario, resource, occupant } => commands::select(&ctx, scenario, resource, occupant),
        Command::Balance { scenario, resource, occupant } => commands::balance(&ctx, scenario, resource, occupant),
        Command::Train { scenario } => commands::train(&ctx, scenario),
        Command::Evaluate { scenario } => commands::evaluate(&ctx, scenario),
        Command::Simulate { profiles, horizon } => commands::simulate(&ctx, profiles, horizon),
        Command::Generate { occupant } => commands::generate(&ctx, occupant),
        Command::Stats { survey } => commands::stats(&ctx, survey),
    })
}
