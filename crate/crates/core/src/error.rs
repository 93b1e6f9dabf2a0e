//! Error type shared across the crate.

use std::fmt;

/// Errors produced by problem construction, estimators, and experiment
/// harnesses.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input failed validation (out-of-range parameter, bad invariant).
    Invalid(String),
    /// Two objects that must live on the same atom set do not.
    DimensionMismatch { expected: usize, got: usize },
    /// A numerical routine could not produce a usable result. The message
    /// carries the diagnostics (e.g. the eigenvalue range of a Gram matrix
    /// that failed to factor at maximum jitter).
    Numerical(String),
    /// Rejection sampling exhausted its attempt budget.
    RejectionBudget {
        attempts: u32,
        seed: u64,
        detail: String,
    },
    /// A problem file could not be parsed.
    Parse { line: usize, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected} atoms, got {got}")
            }
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::RejectionBudget {
                attempts,
                seed,
                detail,
            } => write!(
                f,
                "rejection budget of {attempts} attempts exceeded (seed {seed}): {detail}"
            ),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
