//! `sqfn`: configuration-driven runs of the square-function experiments.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input,
//! 3 the experiment reported a failure, 64 bad usage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::{error, info};

use commands::{run, CliError, Command, Outcome};
use config::{RawConfig, RunConfig};

const EXIT_FAIL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "sqfn", version, about = "Square-function experiments on discretized ADR sets")]
struct Cli {
    /// flat `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides output_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// random seed (overrides seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (overrides runtime.threads)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut raw = RawConfig::parse(&text)?;
    if let Some(out) = &cli.out {
        raw.set("output_dir", out.display());
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", seed);
    }
    if let Some(t) = cli.threads {
        raw.set("runtime.threads", t);
    }
    Ok(RunConfig::from_raw(&raw)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SQFN_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = load(&cli).and_then(|cfg| {
        if let Some(n) = cfg.threads {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("thread pool: {e}");
            }
        }
        run(cli.command, &cfg)
    });
    match result {
        Ok(Outcome::Pass) => {
            info!("{}: pass", cli.command.name());
            ExitCode::SUCCESS
        }
        Ok(Outcome::Fail(reason)) => {
            error!("{}: experiment failed: {reason}", cli.command.name());
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
