//! The `angler` command-line client.
//!
//! Every command except `serve`, `builtins` and `module conformance` is a
//! thin call against a running backend's `/api/v1/` endpoints. Output is one
//! record per line: tab-separated fields with `--format plain`, one JSON
//! value with `--format structured`.

pub mod args;
pub mod client;
mod commands;
pub mod output;

use std::process::ExitCode;

pub use args::Cli;
pub use client::Client;

/// Process exit status. The numbers are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Validation or diagnostic failures: invalid pipelines, corpora,
    /// modules or failing conformance checks.
    Failures = 1,
    Usage = 2,
    /// The backend, a module or the filesystem failed.
    Remote = 3,
}

impl From<ExitStatus> for ExitCode {
    fn from(s: ExitStatus) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Remote(String),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Invalid(_) => ExitStatus::Failures,
            CliError::Usage(_) => ExitStatus::Usage,
            CliError::Remote(_) => ExitStatus::Remote,
        }
    }

    pub(crate) fn io(what: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Remote(format!("{what}: {e}"))
    }
}

/// Runs one parsed command line, reporting errors on stderr.
pub async fn run(cli: Cli) -> ExitStatus {
    match commands::dispatch(cli).await {
        Ok(status) => status,
        Err(e) => {
            eprintln!("angler: {e}");
            e.status()
        }
    }
}
