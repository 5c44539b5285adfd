use std::panic;
use std::process::ExitCode;

fn main() -> ExitCode {
    // A panic is a broken invariant, not bad input.
    let code = panic::catch_unwind(|| flair_cli::run(std::env::args_os())).unwrap_or(3);
    ExitCode::from(code as u8)
}
