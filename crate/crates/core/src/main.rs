use std::process::ExitCode;

fn main() -> ExitCode {
    reinsure::cli::run(std::env::args_os())
}
