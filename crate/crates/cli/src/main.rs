mod args;
mod commands;
mod config;
mod error;
mod report;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use error::CliError;

/// Worker cap from `SBS_THREADS`; unset or empty means the default pool.
fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("SBS_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Param(format!("SBS_THREADS must be a positive integer, got {v:?}"))),
        },
        _ => Ok(None),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match thread_cap()? {
        Some(n) => sbs_core::par::with_threads(n, || commands::dispatch(cli)),
        None => commands::dispatch(cli),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match panic::catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("sbs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        // The panic message has already been printed by the default hook.
        Err(_) => ExitCode::from(2),
    }
}
