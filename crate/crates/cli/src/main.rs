use std::process::ExitCode;

use clap::Parser;
use vproj_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vproj: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
