use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{EntityId, RelationId};

/// Errors raised by ingestion, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    Parse { line: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid cache: {0}")]
    Cache(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("relation `{relation}` has no training triples after the split")]
    SplitRejected { relation: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "negative sampler saturated for subject {subject} under relation {relation} after {attempts} attempts"
    )]
    Saturated {
        subject: EntityId,
        relation: RelationId,
        attempts: usize,
    },

    #[error("non-finite parameters in relation {relation} during round {round}")]
    Divergence { round: usize, relation: RelationId },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
