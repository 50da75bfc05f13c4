//! Config-driven orchestration of the qhall engine: scenario parsing,
//! subcommands, reports and the exit-code contract.

pub mod commands;
pub mod config;
pub mod selftest;

pub use commands::{
    compute, fit_csv, predict, read_csv, torsion, verify, write_csv, write_residuals, CsvRow, PredictReport,
    TorsionReport, VerifyHooks, VerifyReport,
};
pub use config::{RunConfig, Tol};
pub use selftest::{selftest, SelftestOptions, SelftestReport};

/// CLI failure classes; each maps to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<qhall_core::Error> for CliError {
    fn from(e: qhall_core::Error) -> Self {
        use qhall_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Domain(_) | E::Unsupported(_) => CliError::Config(e.to_string()),
            E::Precision(_) | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
