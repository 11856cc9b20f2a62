use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: i64, hi: i64 },

    #[error("window of {sites} sites exceeds the materialization cap of {cap}")]
    WindowTooLarge { sites: u128, cap: u128 },

    #[error("site {site} is outside the window [{lo}, {hi}] (walk time {time})")]
    OutOfWindow { site: i64, lo: i64, hi: i64, time: u64 },

    #[error("cookie value {value} at site {site} lies outside [-{max_jump}, {max_jump}]")]
    ValueOutOfRange { site: i64, value: i64, max_jump: u32 },

    #[error("patch stack has {got} entries, expected {expected}")]
    PatchLength { got: usize, expected: usize },

    #[error("environments disagree on (L, M, window): {0}")]
    MismatchedEnvironments(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("relation undefined: {0}")]
    NotInDomain(String),

    #[error("simulation budget of {budget} steps exhausted before a verdict")]
    BudgetExhausted { budget: u64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
