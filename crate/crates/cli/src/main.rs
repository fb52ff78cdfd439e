use std::process::ExitCode;

use clap::Parser;
use hifid_cli::app::{run, Cli, EXIT_COMPLETED, EXIT_ERROR};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reserves 2 for usage errors, which here means "no detection"
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { EXIT_COMPLETED as u8 });
        }
    };
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    match run(cli, &mut out, &mut err) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
