use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),
    #[error("argument {arg} = {value} outside the admissible domain: {detail}")]
    Domain {
        arg: &'static str,
        value: f64,
        detail: String,
    },
    #[error("iterate left the domain of finiteness at step {step}")]
    Overflow { step: usize },
    #[error("target {0} is outside the attained range")]
    Range(f64),
    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },
    #[error("regime error: {0}")]
    Regime(String),
    #[error("precision floor reached after {usable} usable iterates")]
    PrecisionFloor { usable: usize },
    #[error("tail function underflows on most of the grid: {0}")]
    InsufficientGrid(String),
    #[error("tail function vanishes at x = {0}")]
    DivideByZero(f64),
    #[error("node {0} does not exist in the tree")]
    NoSuchNode(String),
    #[error("not a cutset: {0}")]
    NotACutset(String),
    #[error("node budget exceeded: {requested} nodes requested, cap is {cap}")]
    MemoryBudgetExceeded { requested: u64, cap: u64 },
    #[error("population count overflow at generation {generation}")]
    PopulationOverflow { generation: usize },
    #[error("gauge function is not admissible: {0}")]
    InvalidGauge(String),
    #[error("gauge is not monotone near zero: {0}")]
    NotMonotone(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(arg: &'static str, value: f64, detail: impl Into<String>) -> Self {
        Error::Domain {
            arg,
            value,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidLaw(_) | Error::Io(_) => 3,
            Error::MemoryBudgetExceeded { .. } | Error::PopulationOverflow { .. } => 4,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
