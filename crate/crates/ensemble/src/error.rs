use blockflow_core::{DagError, ExecutorError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("invalid pattern: {0}")]
    InvalidSpec(String),
    #[error("sync point {point} does not separate two stages (shortest pipeline has {stages})")]
    BadSyncPoint { point: usize, stages: usize },
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Execution(#[from] ExecutorError),
}
