use std::process::ExitCode;

fn main() -> ExitCode {
    teffect_cli::app::main_with(std::env::args_os())
}
