use std::process::ExitCode;

use clap::Parser;
use vlp_cli::Cli;

fn main() -> ExitCode {
    match vlp_cli::run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
