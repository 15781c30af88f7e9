use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },

    #[error("non-positive support function h = {value} at node {node}")]
    Domain { node: usize, value: f64 },

    #[error("convexity lost at node {node}: {quantity} = {value}")]
    ConvexityLost {
        node: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("guard failure at node {node}: {quantity} = {value} with dt = {dt:e} (dt_min reached)")]
    GuardFailure {
        node: usize,
        quantity: &'static str,
        value: f64,
        dt: f64,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
