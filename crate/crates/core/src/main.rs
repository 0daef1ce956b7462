use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(listrank::cli::run(std::env::args()) as u8)
}
