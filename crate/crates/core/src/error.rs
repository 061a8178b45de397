use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("index {index} out of range for table with {len} rows ({what})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{file}: line {line}: ragged row, expected {expected} fields, found {found}")]
    RaggedRow {
        file: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{file}: line {line}: {msg}")]
    Parse { file: PathBuf, line: u64, msg: String },

    #[error("edge ({src}, {dst}) references a node outside 0..{num_nodes}")]
    NodeOutOfRange {
        src: usize,
        dst: usize,
        num_nodes: usize,
    },

    #[error("interval of {0} minutes does not divide a day")]
    BadInterval(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("range of {len} rows is too short for windows of {need}")]
    EmptyWindow { len: usize, need: usize },

    #[error("every target in the batch is masked")]
    AllMasked,

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("parameter {0} has no gradient")]
    MissingGradient(String),

    #[error("fit undefined: {0}")]
    FitUndefined(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
