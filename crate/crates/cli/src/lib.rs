//! Library surface of the `roci` command-line tool, split out so that
//! integration tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use roci_core::error::Error;

use crate::config::RunConfig;
use crate::manifest::{RunManifest, RunRecorder};

/// Simulation engine for designing MAMS-ROCI randomised trials.
#[derive(Debug, Parser)]
#[command(name = "roci", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the configured `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate operating characteristics for scenarios at given sample sizes.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Scenario names (comma separated); defaults to all configured.
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<String>>,
        /// Total sample sizes to simulate (comma separated).
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
    },
    /// Run the power-grid / loess / recommend / bootstrap-validate pipeline.
    Samplesize {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Size the interim survival comparison and emit the design grids.
    Interim {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Analyse a trial dataset (CSV: arm_value,n,events).
    Analyze {
        #[command(flatten)]
        common: CommonOpts,
        /// Dataset file.
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Exit codes: 0 success, 2 config error, 3 data error, 4 insufficient
/// range, 5 internal numerical failure.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Validation(_) => 2,
        Error::Data(_) => 3,
        Error::InsufficientRange { .. } => 4,
        Error::Inference { .. } | Error::Numerical(_) => 5,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate { .. } => "simulate",
        Command::Samplesize { .. } => "samplesize",
        Command::Interim { .. } => "interim",
        Command::Analyze { .. } => "analyze",
    }
}

fn common_of(cmd: &Command) -> &CommonOpts {
    match cmd {
        Command::Simulate { common, .. }
        | Command::Samplesize { common }
        | Command::Interim { common }
        | Command::Analyze { common, .. } => common,
    }
}

/// Run a parsed command. Returns the manifest on success.
pub fn run(cli: &Cli) -> Result<RunManifest, (Error, i32)> {
    let common = common_of(&cli.command);
    let mut config = RunConfig::load(&common.config).map_err(|e| {
        let code = exit_code_for(&e);
        (e, code)
    })?;
    if let Some(seed) = common.seed {
        config.mc.master_seed = seed;
    }
    let resolved = config.resolve().map_err(|e| {
        let code = exit_code_for(&e);
        (e, code)
    })?;

    let out_dir: PathBuf = common
        .out
        .clone()
        .unwrap_or_else(|| Path::new(&config.output.dir).join(command_name(&cli.command)));
    let mut recorder =
        RunRecorder::new(&out_dir, command_name(&cli.command)).map_err(|e| (e, 3))?;

    let workers = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| (Error::Numerical(format!("worker pool: {e}")), 5))?;

    let outcome: Result<(), Error> = pool.install(|| match &cli.command {
        Command::Simulate { scenarios, n, .. } => {
            let names: Vec<String> = match scenarios {
                Some(list) => list.clone(),
                None => resolved.scenarios.iter().map(|s| s.name.clone()).collect(),
            };
            commands::cmd_simulate(&resolved, &names, n, &mut recorder).map(|_| ())
        }
        Command::Samplesize { .. } => {
            commands::cmd_samplesize(&resolved, &mut recorder).map(|_| ())
        }
        Command::Interim { .. } => commands::cmd_interim(&resolved, &mut recorder).map(|_| ()),
        Command::Analyze { dataset, .. } => {
            let text = std::fs::read_to_string(dataset).map_err(|e| {
                Error::Data(format!("cannot read dataset {}: {e}", dataset.display()))
            })?;
            commands::cmd_analyze(&resolved, &text, &mut recorder).map(|_| ())
        }
    });

    match outcome {
        Ok(()) => {
            let manifest = recorder.finish(&config, None).map_err(|e| (e, 3))?;
            Ok(manifest)
        }
        Err(e) => {
            // partial outputs stay on disk, marked incomplete
            let _ = recorder.finish(&config, Some(&e));
            let code = exit_code_for(&e);
            Err((e, code))
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; usage errors are config errors
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(manifest) => {
            println!(
                "{}: complete, {} output file(s) in place, fingerprint {}",
                manifest.command,
                manifest.outputs.len(),
                &manifest.fingerprint[..16]
            );
            for d in &manifest.diagnostics {
                println!("  note: {d}");
            }
            0
        }
        Err((e, code)) => {
            eprintln!("error: {e}");
            code
        }
    }
}
