use std::process::ExitCode;

fn main() -> ExitCode {
    noma_v2x::cli::main_with_args(std::env::args_os())
}
