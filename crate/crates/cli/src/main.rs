use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(s3o_cli::run(std::env::args_os()))
}
