//! Error type shared across the crate.
//!
//! Variants are grouped by what the caller can do about them: fix the file
//! (`Schema`, `Parse`), fix cross-references between files (`Reference`),
//! relax the problem (`Infeasible`), or report a numeric breakdown
//! (`Convergence`). The CLI maps all of them to exit code 1; usage mistakes
//! (bad flags) exit 2 via the argument parser.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A table is structurally wrong: missing column, wrong arity,
    /// duplicate key, value out of range.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell failed to parse; message carries file/row/column context.
    #[error("parse error: {0}")]
    Parse(String),

    /// An identifier in one table has no counterpart in another.
    #[error("reference error: {0}")]
    Reference(String),

    /// The requested design cannot be satisfied (e.g. sample larger than
    /// population, or no feasible allocation).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative procedure failed to reach its tolerance.
    #[error("did not converge: {0}")]
    Convergence(String),

    /// Invalid argument to a library call.
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("cannot read {path}: {source}")]
    FileRead {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    FileWrite {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Schema error with preformatted context.
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// Parse error pointing at file, 1-based data row and column name.
    pub fn parse_at(file: &str, row: usize, col: &str, detail: impl std::fmt::Display) -> Self {
        Error::Parse(format!("{file}, row {row}, column {col}: {detail}"))
    }

    /// Invalid argument to a library call.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
