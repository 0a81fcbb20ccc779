use std::process::ExitCode;

use clap::Parser;
use mixweigh_cli::{run, RunManifest};

fn main() -> ExitCode {
    let manifest = match RunManifest::try_parse() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&manifest) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for p in &outcome.written {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mixweigh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
