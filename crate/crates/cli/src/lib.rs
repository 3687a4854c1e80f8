//! Library half of the `subfrac` command-line driver: config resolution,
//! the experiment registry, output writing and ledger reports.

pub mod config;
pub mod experiments;
pub mod output;
pub mod report;

use std::fmt;

/// Artifact version written into every result row and hashed config.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure classes of a CLI invocation; each maps to a fixed exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    NonConvergence(String),
    Invariant(String),
    Io(String),
}

impl CliError {
    pub fn config(e: subfrac::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Config(_) => "config",
            CliError::NonConvergence(_) => "nonconvergence",
            CliError::Invariant(_) => "invariant",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::NonConvergence(m)
            | CliError::Invariant(m)
            | CliError::Io(m) => m,
        }
    }
}

/// Single line, machine-greppable: `error kind=<kind> code=<n> msg=<text>`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.message().replace('\n', " ");
        write!(
            f,
            "error kind={} code={} msg={}",
            self.kind(),
            self.exit_code(),
            msg
        )
    }
}

impl std::error::Error for CliError {}

impl From<subfrac::Error> for CliError {
    fn from(e: subfrac::Error) -> Self {
        use subfrac::Error as E;
        match e {
            E::NonConvergence { .. } | E::Quadrature(_) => CliError::NonConvergence(e.to_string()),
            E::Invariant(_) => CliError::Invariant(e.to_string()),
            E::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
