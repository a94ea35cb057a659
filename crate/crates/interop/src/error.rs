use blockflow_core::{DagError, TaskError, WorkloadError};
use blockflow_pilot::PilotError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InteropError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("dependency `{0}` is not defined in the file")]
    UnresolvedDependency(String),
    #[error("broker queue is closed")]
    QueueClosed,
    #[error("resource `{0}` has no WAN connectivity; the broker interface is not available there")]
    NoConnectivity(String),
    #[error("results are not available until every task of the batch is terminal")]
    NotAvailable,
    #[error("unknown batch {0}")]
    UnknownBatch(usize),
    #[error("subsystem accepts independent tasks only: {0}")]
    NotIndependent(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
