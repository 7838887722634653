//! Experiment runner: certification sweeps, demos and invariant suites over
//! `stein-core`, emitted as CSV or JSON tables.

pub mod config;
pub mod experiments;
pub mod output;
pub mod table;
pub mod verify;

pub use config::{ConfigError, Experiment, Format, SweepConfig};
pub use table::{Cell, Row, Skip, Table};

pub const SUITE_VERSION: &str = "1";

/// Why a run did not succeed, mapped onto the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("certification failure: {0}")]
    Certification(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Certification(_) => 1,
            RunError::Config(_) => 2,
            RunError::Resource(_) => 3,
            RunError::Io(_) => 2,
        }
    }
}
