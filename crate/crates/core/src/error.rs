use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel {kernel} cannot be evaluated on {found} outputs")]
    VariantMismatch { kernel: &'static str, found: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    #[error("sketched Gram matrix is numerically zero; no basis function can be built")]
    EmptyBasis,

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("empty n-gram vocabulary")]
    EmptyVocabulary,

    #[error("training diverged at epoch {epoch}: {loss_kind} loss is {value} (try a smaller learning rate)")]
    Divergence { epoch: usize, loss_kind: &'static str, value: f64 },

    #[error("decoding with an unnormalized output kernel requires an explicit opt-in")]
    UnnormalizedKernel,

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::EmptyBasis | Error::Divergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
