//! Command-line front end: generate data, train, evaluate, compare tail
//! reports and run the synthetic study from one declarative TOML config.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "longtail", version, about = "Tail-aware forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as wide CSV with a manifest.
    Generate(RunArgs),
    /// Fit or train the configured model and save a checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Resume from this training checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare tail reports; the first is the baseline.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Also write compare.md and compare.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the synthetic AR versus recurrent study.
    Study(RunArgs),
}

/// Loads the config, applies flag overrides and validates it.
fn resolve(args: &RunArgs) -> CliResult<(RunConfig, Vec<String>)> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut overrides = Vec::new();
    if let Some(seed) = args.seed {
        config.seed = seed;
        overrides.push(format!("seed = {seed}"));
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
        overrides.push("out".to_string());
    }
    Ok((config.resolve()?, overrides))
}

fn require_config(args: &RunArgs, command: &str) -> CliResult<()> {
    if args.config.is_none() {
        return Err(CliError::Config(format!("--config: required by {command}")));
    }
    Ok(())
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Generate(run) => {
            require_config(&run, "generate")?;
            let (config, overrides) = resolve(&run)?;
            let dir = commands::generate(&config, &overrides)?;
            println!("wrote {}", dir.display());
        }
        Command::Train { run, checkpoint } => {
            require_config(&run, "train")?;
            let (config, overrides) = resolve(&run)?;
            let path = commands::train(&config, checkpoint.as_deref(), &overrides)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate { run, checkpoint } => {
            require_config(&run, "evaluate")?;
            let (config, overrides) = resolve(&run)?;
            let report = commands::evaluate_checkpoint(&config, &checkpoint, &overrides)?;
            print!("{}", report.to_csv(config.report.metric));
        }
        Command::Compare { reports, out } => {
            let comparison = commands::compare_files(&reports, out.as_deref())?;
            print!("{}", comparison.to_markdown());
        }
        Command::Study(run) => {
            let (config, overrides) = resolve(&run)?;
            let report = commands::study(&config, &overrides)?;
            for c in report.checks() {
                let verdict = if c.passed { "pass" } else { "fail" };
                println!("{}: {:.4} (threshold {}) {verdict}", c.name, c.value, c.threshold);
            }
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit status: 0 on success,
/// 2 for usage and configuration errors, 1 for anything else.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
