//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by kernel evaluation, training, geometry and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid kernel parameter: {0}")]
    InvalidKernelParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset holds a single category; training needs at least two")]
    SingleCategory,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("solver stopped after {iterations} iterations with residual {residual:.3e} > tolerance")]
    Unconverged { iterations: usize, residual: f64 },

    #[error("dual objective is unbounded: data not separable in the chosen feature space")]
    NotSeparable,

    #[error("Gram matrix is not positive semidefinite (negative curvature {0:.3e} encountered)")]
    NotPositiveSemidefinite(f64),

    #[error("model was trained without a soft-margin parameter; no slack variables exist")]
    NoSlacks,

    #[error("margins are undefined: model misclassifies {count} training point(s)")]
    TrainingErrorsPresent { count: usize },

    #[error("no training points in categories {k} or {l}; pairwise margin undefined")]
    EmptyClassPair { k: usize, l: usize },

    #[error("unsupported model format {found:?}; this build reads \"msvm2/1\" only — upgrade the tool or re-train")]
    FormatVersion { found: String },

    #[error("digest mismatch: {context}")]
    DigestMismatch { context: String },

    #[error("corrupt model field {field:?}: {message}")]
    CorruptField { field: &'static str, message: String },

    #[error("every grid point failed to train; no selection possible")]
    AllGridPointsFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for usage/input errors, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Unconverged { .. }
            | Error::NotSeparable
            | Error::NotPositiveSemidefinite(_)
            | Error::AllGridPointsFailed => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
