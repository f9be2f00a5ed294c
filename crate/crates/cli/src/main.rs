use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(roci_cli::run_from_args(std::env::args()) as u8)
}
