use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },

    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(NodeId),

    #[error("robustness parameters must satisfy r, s < n (got r={r}, s={s}, n={n})")]
    RobustnessParameter { r: usize, s: usize, n: usize },

    #[error("exhaustive robustness check refused: {n} nodes exceeds the limit of {limit}")]
    Capacity { n: usize, limit: usize },

    #[error("duplicate source {0} in filter candidates")]
    DuplicateSource(NodeId),

    #[error("non-finite value {value} from source {source_id}")]
    NonFinite { source_id: NodeId, value: f64 },

    #[error("delay bound violated for edge {from}->{to}: e_i + tau = {total} > tau = {bound}")]
    DelayBound {
        from: NodeId,
        to: NodeId,
        total: usize,
        bound: usize,
    },

    #[error("invalid weight a[{to}][{from}] = {weight}: {reason}")]
    InvalidWeight {
        to: NodeId,
        from: NodeId,
        weight: f64,
        reason: &'static str,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("scheduler invariant broken: {0}")]
    Internal(String),

    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's input rather than the filesystem.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv(_))
    }
}
