use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match driverchain_cli::run(driverchain_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
