//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimation, grouping, tuning, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("assignment is empty")]
    EmptyAssignment,

    #[error(
        "rank deficient: requested {requested} factors but only {positive} strictly positive \
         eigenvalues (leading eigenvalues: {eigenvalues:?})"
    )]
    RankDeficient {
        requested: usize,
        positive: usize,
        eigenvalues: Vec<f64>,
    },

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("degenerate group: min(smallest group size, T) = {m} is below 2")]
    DegenerateGroup { m: usize },

    #[error("zero group-model residual at K = {k}; IC(K) is undefined")]
    ZeroResidual { k: usize },

    #[error("singular loadings: condition number {cond:.3e} exceeds 1e12")]
    SingularLoadings { cond: f64 },

    #[error("insufficient rows: training split has {rows} rows but needs at least {need}")]
    InsufficientRows { rows: usize, need: usize },

    #[error("cross-section size {n} is not divisible by the scenario's {groups} groups")]
    IndivisibleGroups { n: usize, groups: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: String,
        message: String,
    },

    #[error("no data rows remain after filtering missing values")]
    NoRowsRemaining,

    #[error("column {name} has zero sample variance")]
    ZeroVariance { name: String },

    #[error("no observations fall in month {month}")]
    EmptyMonth { month: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
