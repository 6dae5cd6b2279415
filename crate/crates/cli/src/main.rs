use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use regem_cli::{error_json, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGEM_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", error_json("usage", msg.lines().next().unwrap_or_default().trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
