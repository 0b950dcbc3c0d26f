use std::io;
use std::process::ExitCode;

use bbfamily::harness::cli::run_cli;

fn main() -> ExitCode {
    let code = run_cli(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
