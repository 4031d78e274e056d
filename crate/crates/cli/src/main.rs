use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let config = rwp::CliConfig::parse();
    ExitCode::from(rwp::main_with(&config))
}
