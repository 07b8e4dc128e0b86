use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mcf_qkd_cli::run(std::env::args_os()))
}
