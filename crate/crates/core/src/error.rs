use thiserror::Error;

/// Errors produced by the estimation, simulation and diagnostic routines.
///
/// The variants split into two families: input/validation problems
/// (caller supplied something outside the documented domain) and numerical
/// failures (the data were valid but a computation could not complete).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("simulated path exploded at index {index} (|x| = {value:e})")]
    Explosion { index: usize, value: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("kernel window is empty at c = {c}")]
    EmptyWindow { c: f64 },

    #[error("optimizer failed: {0}")]
    NoConvergence(String),

    #[error("quadrature failed to reach tolerance {tol:e} (estimate error {err:e})")]
    Quadrature { tol: f64, err: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::TooShort { .. }
                | Error::InvalidParameter { .. }
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
