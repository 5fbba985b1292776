use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by measure construction, solvers and mesh ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("measure has empty support")]
    EmptySupport,

    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),

    #[error("weight sum {sum} deviates from 1 by more than {tolerance}")]
    WeightSumOutOfTolerance { sum: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("infeasible marginals: mass residual {residual}")]
    InfeasibleMarginals { residual: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("energy is not finite")]
    NonFiniteEnergy,

    #[error("singular block: {0}")]
    SingularBlock(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("measures must be centered (zero mean)")]
    NotCentered,

    #[error("conditional slice for cell ({row_bin}, {col_bin}) has no mass")]
    EmptyConditional { row_bin: usize, col_bin: usize },

    #[error("subspace solver failed: {0}")]
    SolverFailure(String),

    #[error("parse error: {0}")]
    ParseError(String),

    #[error("graph is not connected")]
    DisconnectedGraph,

    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
