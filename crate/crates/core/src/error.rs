//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, solvers, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A grid coordinate lies outside the configured mesh.
    #[error("chiplet ({row}, {col}) outside {x}x{y} grid")]
    ChipletOutsideGrid { row: usize, col: usize, x: usize, y: usize },

    /// A partition vector does not satisfy the partition rules.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// A workload file or operator sequence violates a structural rule.
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),

    /// Failure parsing a workload or model file.
    #[error("parse error: {0}")]
    Parse(String),

    /// Two operators were treated as chained but their shapes do not line up.
    #[error("operators are not chainable: {0}")]
    NotChained(String),

    /// The exact solver was asked to enumerate more candidates than allowed.
    #[error("search space too large: {candidates} candidates exceed limit {limit}")]
    SearchSpaceTooLarge { candidates: u64, limit: u64 },

    /// The model has no feasible point.
    #[error("infeasible model: {0}")]
    Infeasible(String),

    /// A route handed to the simulator is not a connected path over links.
    #[error("invalid route: {0}")]
    InvalidRoute(String),

    /// Underlying file I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
