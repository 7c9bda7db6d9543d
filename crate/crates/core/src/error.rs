use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed NTU skeleton text.
    #[error("parse error at line {line} (byte offset {offset}): {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("topology mismatch: expected {expected} joints, found {found}")]
    TopologyMismatch { expected: usize, found: usize },

    /// JSON document does not follow the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid filename `{0}`: expected the SsssCcccPpppRrrrAaaa pattern")]
    Filename(String),

    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("sequence {index} has {rule} id {id} which is in neither the train nor the test set")]
    UnassignedSequence {
        index: usize,
        rule: &'static str,
        id: u32,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("joint {joint} is not covered by any hyperedge")]
    Coverage { joint: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::TopologyMismatch { .. } => "topology_mismatch",
            Error::Schema(_) => "schema",
            Error::Filename(_) => "filename",
            Error::Dimension { .. } => "dimension",
            Error::Domain(_) => "domain",
            Error::InsufficientFrames { .. } => "insufficient_frames",
            Error::UnassignedSequence { .. } => "unassigned_sequence",
            Error::Config(_) => "config",
            Error::Coverage { .. } => "coverage",
            Error::Divergence { .. } => "divergence",
            Error::Fixture(_) => "fixture",
            Error::Render(_) => "render",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
