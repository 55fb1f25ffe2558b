use clap::Parser;

use tanlap_cli::args::Cli;
use tanlap_cli::{execute, RunConfig};

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let code = match RunConfig::from_cli(cli).and_then(|cfg| execute(&cfg)) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}
