use std::process::ExitCode;

fn main() -> ExitCode {
    let code = gradlab::cli::run_with(std::env::args(), &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
