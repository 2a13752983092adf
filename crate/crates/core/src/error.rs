use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("degenerate element {element}: area {area:e}")]
    DegenerateElement { element: usize, area: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step {step}: non-finite value in field {field} at node {node}")]
    NonFinite { step: usize, field: &'static str, node: usize },

    #[error("mesh is not non-obtuse: element {element} has an angle with cosine {cos:e}")]
    ObtuseMesh { element: usize, cos: f64 },

    #[error("{kind} envelope exceeded at step {step}: {detail}")]
    EnvelopeViolation { kind: String, step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error comes from the numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoConvergence { .. } | Error::NonFinite { .. } | Error::EnvelopeViolation { .. } => true,
            Error::Step { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
