use std::process::ExitCode;

use clap::Parser;
use isac_cli::{commands, Cli};

fn main() -> ExitCode {
    // Usage errors share exit code 1 with schema errors; clap's own code 2 means infeasible here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = commands::init_threads().and_then(|()| commands::run(cli));
    match result {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
