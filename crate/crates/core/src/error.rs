use thiserror::Error;

/// Errors raised by the quantization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("prototype set is empty")]
    EmptyPrototypes,

    /// A Voronoi cell received zero importance-sampling mass.
    #[error("cell {0} has zero estimated probability")]
    EmptyCell(usize),

    /// `g(x) = 0` while `f(x) > 0`, or the two measures disagree on atoms.
    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("predictor failed: {0}")]
    Predictor(String),
}

pub type Result<T> = std::result::Result<T, Error>;
