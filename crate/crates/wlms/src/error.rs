use blockflow_core::{DagError, ExecutionReport, ResourceError, WorkloadError};
use blockflow_pilot::PilotError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WlmsError {
    #[error("no resource can host a {cores}-core task running {runtime} s")]
    NoFeasibleResource { cores: u32, runtime: f64 },
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("bad resource model: {0}")]
    Model(String),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error("execution failed for {}", task_ids.join(", "))]
    ExecutionFailed {
        task_ids: Vec<String>,
        report: Box<ExecutionReport>,
    },
}
