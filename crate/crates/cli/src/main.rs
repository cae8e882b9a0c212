use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use lmmfit_cli::{run, Cli, RunConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (code, text) = run(&cfg);
    if code == 0 {
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(text.as_bytes());
    } else {
        eprint!("{text}");
    }
    ExitCode::from(code as u8)
}
