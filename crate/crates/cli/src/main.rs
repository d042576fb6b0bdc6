use std::process::ExitCode;

use clap::Parser;

use mfctrl_cli::{exit_code, run, Cli, EXIT_PRECONDITION};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Ok(v) = std::env::var("MFCTRL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: MFCTRL_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_PRECONDITION);
            }
        }
    }

    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
