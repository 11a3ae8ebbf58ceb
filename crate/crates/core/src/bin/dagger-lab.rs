use std::process::ExitCode;

use clap::Parser;
use dagger_lab::io::cli::Cli;
use dagger_lab::io::commands;
use dagger_lab::Error;

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match commands::run(Cli::parse()) {
        Ok(()) => Ok(ExitCode::SUCCESS),
        // Same status clap uses for bad arguments.
        Err(Error::Usage(msg)) => {
            eprintln!("error: {msg}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}
