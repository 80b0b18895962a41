use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let code = tweezer_thermo::cli::run(std::env::args_os(), &mut input, &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
