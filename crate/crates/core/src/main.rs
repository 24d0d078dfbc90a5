use std::process::ExitCode;

fn main() -> ExitCode {
    fieldrecon::cli::run(std::env::args_os())
}
