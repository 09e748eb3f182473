use std::process::ExitCode;

fn main() -> ExitCode {
    smartpaste::cli::run(std::env::args_os())
}
