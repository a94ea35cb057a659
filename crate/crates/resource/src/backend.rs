use blockflow_core::{Event, FailureReason, JobDescription, ResourceError, State};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub state: State,
    pub reason: Option<FailureReason>,
    pub submitted: f64,
    pub started: Option<f64>,
    pub ended: Option<f64>,
}

/// The uniform job-submission interface every backend implements.
pub trait Backend: Send {
    fn resource_id(&self) -> &str;

    /// Backend time in seconds (simulated, or wall-clock since creation).
    fn now(&self) -> f64;

    fn submit_job(&mut self, jd: JobDescription) -> Result<String, ResourceError>;

    fn job_state(&self, job_id: &str) -> Result<JobStatus, ResourceError>;

    fn cancel_job(&mut self, job_id: &str) -> Result<(), ResourceError>;

    /// Seconds until `jd` would start if submitted now, assuming no other
    /// job arrives later and every job holds its cores until its walltime.
    fn estimate_queue_wait(&self, jd: &JobDescription) -> Result<f64, ResourceError>;

    /// Advance to `until`, returning the events recorded on the way.
    fn step_queue(&mut self, until: f64) -> Vec<Event>;

    fn queue_len(&self) -> usize;
}
