//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any pgcl component.
#[derive(Debug, Error)]
pub enum PgclError {
    /// Operand shapes are incompatible for the named operation.
    #[error("dimension error in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// A value left the mathematical domain of the operation.
    #[error("numeric domain error in {op}: {detail}")]
    NumericDomain { op: &'static str, detail: String },

    /// An API contract was violated (e.g. backward on a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    /// Dataset directory or a mandatory file is unusable.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A dataset file is present but malformed.
    #[error("format error in {file}, line {line}: {detail}")]
    Format {
        file: String,
        line: usize,
        detail: String,
    },

    /// Invalid run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A class is too small for the requested number of folds.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// Checkpoint missing, unreadable, or inconsistent with the data.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Classifier cannot be fit (e.g. single-class training split).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Training produced a non-finite loss; aborted with diagnostics.
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PgclError>;

impl PgclError {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PgclError::Io {
            path: path.into(),
            source,
        }
    }
}
