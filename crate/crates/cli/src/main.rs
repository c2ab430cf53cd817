mod args;
mod commands;
mod error;

use std::io::{IsTerminal, Write};
use std::process::ExitCode;

use clap::Parser;
use tracing::Level;

use args::{Cli, LogLevel};
use error::CliError;

fn init_logging(level: LogLevel) {
    let level = match level {
        LogLevel::Error => Level::ERROR,
        LogLevel::Warn => Level::WARN,
        LogLevel::Info => Level::INFO,
        LogLevel::Debug => Level::DEBUG,
        LogLevel::Trace => Level::TRACE,
    };
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal();
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_target(false)
        .with_ansi(color)
        .with_writer(std::io::stderr)
        .init();
}

fn fail(err: &CliError) -> ExitCode {
    let _ = writeln!(std::io::stderr(), "{}", err.to_json());
    ExitCode::from(err.code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&CliError::usage(e.render().to_string().trim_end()));
        }
    };
    init_logging(cli.log_level);
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&CliError::usage("--threads must be positive"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&CliError::usage(format!("--threads: {e}")));
        }
    }
    match commands::run(&cli) {
        Ok(value) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{value}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            tracing::debug!(kind = %e.kind, "command failed");
            fail(&e)
        }
    }
}
