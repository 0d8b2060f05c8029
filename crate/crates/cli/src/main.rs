use std::process::ExitCode;

use clap::Parser;
use tpdp::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match tpdp::execute(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tpdp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
