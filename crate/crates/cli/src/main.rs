use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = t2c_cli::Cli::parse();
    match t2c_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
