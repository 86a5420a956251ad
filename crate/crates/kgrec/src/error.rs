//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("node id {0} out of range")]
    BadNodeId(usize),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line} in {path}: {detail}")]
    MalformedLine {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("invalid split ratios {ratios:?}: {detail}")]
    BadRatios { ratios: [f64; 3], detail: String },
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} out of bounds (num_nodes = {num_nodes})")]
    NodeOutOfBounds { node: usize, num_nodes: usize },
    #[error("drop rate {0} outside [0, 1)")]
    BadDropRate(f64),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in term {term} at epoch {epoch}, batch {batch}")]
    Diverged {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("sampler error: {0}")]
    Sampler(String),
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no evaluable users in split")]
    NoEvaluableUsers,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`{at}", at = fmt_line(*.line))]
    UnknownKey { key: String, line: Option<usize> },
    #[error("type mismatch for key `{key}`: cannot parse `{value}`{at}", at = fmt_line(*.line))]
    TypeMismatch {
        key: String,
        value: String,
        line: Option<usize>,
    },
    #[error("malformed config line {line}: `{text}`")]
    Malformed { line: usize, text: String },
    #[error("missing required path for key `{key}`")]
    MissingPath { key: String },
    #[error("path for `{key}` does not exist: {path}")]
    PathNotFound { key: String, path: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("truncated checkpoint payload")]
    Truncated,
}

fn fmt_line(line: Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}
