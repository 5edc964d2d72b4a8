use thiserror::Error;

use crate::exprparse::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {context}: relative residual {residual:e}")]
    NumericalFailure { context: String, residual: f64 },

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("divergent moment: n = {n} must exceed omega*T = {omega_t}")]
    DivergentMoment { n: usize, omega_t: f64 },

    #[error("quadrature truncation lost mass {deficit:e} (limit 1e-9)")]
    Truncation { deficit: f64 },

    #[error("invalid heat equation spec: {0}")]
    SpecInvalid(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unbound variable `{0}`")]
    UnboundVariable(char),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
