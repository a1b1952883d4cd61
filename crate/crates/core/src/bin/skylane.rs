use std::process::ExitCode;

fn main() -> ExitCode {
    skylane::cli::main_with_args(std::env::args_os())
}
