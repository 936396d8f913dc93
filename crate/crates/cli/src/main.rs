use std::process::ExitCode;

fn main() -> ExitCode {
    gestr_cli::run(std::env::args_os())
}
