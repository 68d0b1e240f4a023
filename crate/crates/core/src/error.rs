use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is numerically rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("not an orthonormal basis: ||Q^T Q - I||_F = {defect:e}")]
    NotOrthonormal { defect: f64 },
    #[error("invalid spectrum: {0}")]
    InvalidSpec(String),
    #[error("cannot split {items} items across {nodes} nodes")]
    TooFewItems { items: usize, nodes: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("ragged rows: line {line} has {found} fields, expected {expected}")]
    RaggedRows { line: usize, expected: usize, found: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("graph still disconnected after {attempts} attempts")]
    DisconnectedAfterRetries { attempts: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("topology needs at least {min} nodes, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("chain did not mix within {cap} steps")]
    NotMixing { cap: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("rank collapse at outer iteration {iteration} on node {node}")]
    RankCollapse { iteration: usize, node: usize },
    #[error("no eigengap: lambda_r = {lambda_r:e}, lambda_r+1 = {lambda_next:e}")]
    NoEigengap { lambda_r: f64, lambda_next: f64 },
    #[error("eigenvalues {index} and {next} are not distinct")]
    NotDistinct { index: usize, next: usize },
    #[error("initial basis is orthogonal to the target subspace (min cosine {cosine:e})")]
    DegenerateInit { cosine: f64 },
    #[error("power iteration for vector {vector} did not converge in {iterations} iterations")]
    SlowConvergence { vector: usize, iterations: usize },
    #[error("timed out waiting for peer {peer}")]
    Timeout { peer: usize },
    #[error("corrupted frame from peer {peer}: {reason}")]
    FrameCorruption { peer: usize, reason: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for problems with the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse { .. })
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
