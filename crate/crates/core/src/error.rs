use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric (max |m - m^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("{size}x{size} matrix exceeds the dense eigensolver cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("{routine} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("node index {index} out of range for a graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("backward pass requested without a cached forward pass")]
    NoForwardCache,

    #[error("non-finite activation at layer {0}")]
    NonFiniteActivation(usize),

    #[error("bound formula is singular: gamma^2 * m_w == 1 (m_w = {0})")]
    BoundSingularity(f64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}: ragged data: {message}")]
    Ragged { file: String, message: String },

    #[error("node {node} appears in more than one split ({first} and {second})")]
    MaskOverlap {
        node: usize,
        first: &'static str,
        second: &'static str,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
