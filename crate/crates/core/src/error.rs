//! Error type shared across the core modules.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Construction or argument validation failed.
    InvalidArgument(String),
    /// An iterative solver hit its iteration cap before reaching tolerance.
    NoConvergence {
        what: &'static str,
        iterations: u64,
        defect: f64,
    },
    /// A guarded numerical operation lost all significance (vanishing
    /// denominator, overflow of an intermediate, ...).
    NumericalFailure(String),
    /// A simulated population crossed the configured cap. The partial
    /// trajectory is kept by the caller (`simulate_path` returns it with the
    /// cap generation recorded); estimators refuse to fold capped paths in
    /// and surface this error instead.
    CappedPath { generation: u32, population: u64 },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::NoConvergence {
                what,
                iterations,
                defect,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (defect {defect:e})"
            ),
            CoreError::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
            CoreError::CappedPath {
                generation,
                population,
            } => write!(
                f,
                "population cap exceeded at generation {generation} ({population} individuals)"
            ),
        }
    }
}

impl core::error::Error for CoreError {}

pub type CoreResult<T> = Result<T, CoreError>;

pub(crate) fn invalid(msg: impl fmt::Display) -> CoreError {
    CoreError::InvalidArgument(alloc::format!("{msg}"))
}

pub(crate) fn numerical(msg: impl fmt::Display) -> CoreError {
    CoreError::NumericalFailure(alloc::format!("{msg}"))
}
