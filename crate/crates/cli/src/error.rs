use std::fmt;

use driftstop_core::{FilterError, IntegralError, PriorError, SimError, SolverError};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration, bad flags, unwritable outputs.
    Config(String),
    /// A numerical engine failed on a valid configuration.
    Engine(String),
    /// The run finished but at least one hard check failed.
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Engine(m) => write!(f, "engine error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<PriorError> for CliError {
    fn from(e: PriorError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        CliError::Engine(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Engine(e.to_string())
    }
}

impl From<IntegralError> for CliError {
    fn from(e: IntegralError) -> Self {
        CliError::Engine(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::WrongMeasure { .. } => CliError::Config(e.to_string()),
            _ => CliError::Engine(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}
