use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use ggrqr::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let code = match run(&cli, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(code) => code,
        Err(err) => {
            let _ = writeln!(io::stderr(), "error: {err}");
            exit_code(&err)
        }
    };
    ExitCode::from(code as u8)
}
