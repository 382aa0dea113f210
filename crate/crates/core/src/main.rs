use std::process::ExitCode;

fn main() -> ExitCode {
    bqsgd::cli::run()
}
