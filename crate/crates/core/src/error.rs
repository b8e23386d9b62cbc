use thiserror::Error;

use crate::hilbert::NormEstimate;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("operands live in different spaces of dimension {dim}")]
    SpaceMismatch { dim: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vector {index} is linearly dependent on its predecessors (residual norm {norm:e})")]
    DependentConstraint { index: usize, norm: f64 },

    #[error("power iteration did not converge; best estimate {:e}", estimate.value)]
    NormNotConverged { estimate: NormEstimate },

    #[error("k-vectors are linearly dependent (Gram determinant {gram_det:e})")]
    DependentK { gram_det: f64 },

    #[error("admissibility violated: {0}")]
    Admissibility(String),

    #[error("operator norm {norm} is not below 1; the series does not contract")]
    Contraction { norm: f64 },

    #[error("series not converged after {terms} terms (tail bound {tail_bound:e})")]
    SeriesNotConverged { terms: usize, tail_bound: f64 },

    #[error("singular system (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("operator family has no certified summable norm bound")]
    UnsummableFamily,

    #[error("lemma hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("kernel evaluated to {value} at node pair ({row}, {col})")]
    KernelEval { row: usize, col: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
