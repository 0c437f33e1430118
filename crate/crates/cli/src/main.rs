//! `transduce`: featurize, split, train, predict and evaluate property
//! extrapolation models from the command line.

mod config;
mod error;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_overrides, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "transduce", version, about = "Bilinear transduction for out-of-distribution property prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` pairs overriding config keys (dashes map to underscores).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: featurize, split, train, predict, evaluate.
    Run(Common),
    /// Write the feature cache.
    Featurize(Common),
    /// Write the train/val/OOD split.
    Split(Common),
    /// Fit the scaler and the configured model.
    Train(Common),
    /// Predict the held-out rows and export analogies.
    Predict(Common),
    /// Score the predictions file and print the report.
    Evaluate(Common),
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("TRANSDUCE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (common, stage) = match &cli.command {
        Command::Run(c) => (c, "run"),
        Command::Featurize(c) => (c, "featurize"),
        Command::Split(c) => (c, "split"),
        Command::Train(c) => (c, "train"),
        Command::Predict(c) => (c, "predict"),
        Command::Evaluate(c) => (c, "evaluate"),
    };
    let mut overrides = parse_overrides(&common.overrides)?;
    // `--config` may also appear among the trailing overrides
    let late_config = overrides.iter().position(|(k, _)| k == "config").map(|i| overrides.remove(i).1);
    let late_config = late_config.map(|v| PathBuf::from(v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())));
    let cfg = RunConfig::resolve(common.config.as_deref().or(late_config.as_deref()), &overrides)?;
    let report = match stage {
        "run" => Some(pipeline::run(&cfg)?),
        "featurize" => pipeline::featurize(&cfg).map(|_| None)?,
        "split" => pipeline::split(&cfg).map(|_| None)?,
        "train" => pipeline::train(&cfg).map(|_| None)?,
        "predict" => pipeline::predict(&cfg).map(|_| None)?,
        _ => Some(pipeline::evaluate(&cfg)?),
    };
    if let Some(r) = report {
        print!("{}", r.to_json()?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    configure_threads();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
