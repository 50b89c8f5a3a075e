use std::process::ExitCode;

fn main() -> ExitCode {
    corex::cli::run(std::env::args_os())
}
