use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(datatrack_cli::command::execute(std::env::args_os(), &mut std::io::stdout()))
}
