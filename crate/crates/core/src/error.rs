use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("inconsistent tuple degree: expected {expected}, found {found}")]
    InconsistentDegree { expected: usize, found: usize },

    #[error("ordering missing for tuple {tuple:?} in strict symmetrization")]
    MissingOrdering { tuple: Vec<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("control weight R is not symmetric positive definite")]
    IndefiniteR,

    #[error("state weight Q - S R^-1 S' is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    IndefiniteStateWeight { min_eigenvalue: f64 },

    #[error("Riccati iteration failed: {0}")]
    NonStabilizable(String),

    #[error("closed-loop matrix is defective near eigenvalue {eigenvalue}")]
    DefectiveMatrix { eigenvalue: String },

    #[error("degree-{degree} cost operator is singular (relative pivot {pivot:e})")]
    ResonantOperator { degree: usize, pivot: f64 },

    #[error("as-printed projection exists only for 3 modes and the point-square nonlinearity (requested N={modes})")]
    AsPrintedUnavailable { modes: usize },

    #[error("trajectory grids differ")]
    GridMismatch,

    #[error("closed loop diverged at scale {scale} (t = {time})")]
    Diverged { scale: f64, time: f64 },

    #[error("format error on line {line}: {message}")]
    Format { line: usize, message: String },
}
