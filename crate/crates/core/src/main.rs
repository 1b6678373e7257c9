use std::process::ExitCode;

fn main() -> ExitCode {
    let code = conjoint::cli::run_from(std::env::args_os(), &mut std::io::stdout().lock());
    ExitCode::from(code)
}
