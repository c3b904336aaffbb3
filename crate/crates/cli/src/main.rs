use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = actube::Cli::parse();
    match actube::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("actube: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
