//! Command-line surface: `generate`, `train`, `segment`, `benchmark`,
//! `metrics`.
//!
//! Every subcommand reads an optional JSON config file (`--config`) whose
//! flat keys match the long flag names; flags given on the command line win.
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 i/o failure.

mod commands;
mod opts;

pub use opts::{
    BenchmarkOpts, GenerateOpts, MetricsOpts, SegmentOpts, TrainOpts,
};

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "latsegode", version, about = "Latent ODE hybrid-trajectory segmentation")]
pub struct Cli {
    /// JSON config file; keys share names with the long flags below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed recorded in every output artifact.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 guarantees fully sequential execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic hybrid-trajectory dataset.
    Generate(GenerateOpts),
    /// Train a Latent ODE base model on smooth dynamical flows.
    Train(TrainOpts),
    /// Segment trajectories with the marginal-likelihood PELT search.
    Segment(SegmentOpts),
    /// Run the benchmark harness over a labelled test set.
    Benchmark(BenchmarkOpts),
    /// Score stored predictions against a labelled dataset.
    Metrics(MetricsOpts),
}

fn load_json_opts<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))
}

/// Run the CLI from explicit arguments (first element is the binary name).
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        // clap help/version are not errors
        if e.use_stderr() {
            Error::Config(e.to_string())
        } else {
            e.print().ok();
            std::process::exit(0);
        }
    })?;
    dispatch(cli)
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        // best effort: the global pool can only be installed once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Generate(opts) => {
            let merged = match &cli.config {
                Some(p) => opts.merge(load_json_opts(p)?),
                None => opts,
            };
            commands::cmd_generate(merged, seed, &out)
        }
        Command::Train(opts) => {
            let merged = match &cli.config {
                Some(p) => opts.merge(load_json_opts(p)?),
                None => opts,
            };
            commands::cmd_train(merged, seed, &out)
        }
        Command::Segment(opts) => {
            let merged = match &cli.config {
                Some(p) => opts.merge(load_json_opts(p)?),
                None => opts,
            };
            commands::cmd_segment(merged, seed, &out)
        }
        Command::Benchmark(opts) => {
            let merged = match &cli.config {
                Some(p) => opts.merge(load_json_opts(p)?),
                None => opts,
            };
            commands::cmd_benchmark(merged, seed, &out)
        }
        Command::Metrics(opts) => {
            let merged = match &cli.config {
                Some(p) => opts.merge(load_json_opts(p)?),
                None => opts,
            };
            commands::cmd_metrics(merged, seed, &out)
        }
    }
}

/// Process entry point used by the thin binary.
pub fn main_entry() -> ! {
    match run(std::env::args_os()) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
