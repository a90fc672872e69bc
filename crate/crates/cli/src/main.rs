use std::io;
use std::process::ExitCode;

use clap::Parser;
use tuna_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = execute(&cli, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code)
}
