use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use fastdoc_cli::{exit_code, run, threads_from_env, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| run(cli.command, threads));
    match result {
        Ok(stdout) => {
            if let Some(text) = stdout {
                let _ = std::io::stdout().write_all(text.as_bytes());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(exit_code(&e)).unwrap_or(1))
        }
    }
}
