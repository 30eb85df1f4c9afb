use std::process::ExitCode;

use clap::Parser;
use rdnr_cli::{run, Cli, CliError, RunConfig};

/// Caps the rayon pool when `RDNR_THREADS` is set.
fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RDNR_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| CliError::Config(format!("RDNR_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Config("RDNR_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| RunConfig::from_command(cli.command)).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.envelope());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
