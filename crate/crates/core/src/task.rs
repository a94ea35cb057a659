//! Task descriptions: the unit of work shared by every layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::TaskError;

/// Metadata key that allows a non-MPI task to claim more than one core
/// (a multi-threaded executable).
pub const THREADS_PER_TASK_KEY: &str = "threads_per_task";

/// An executable together with its resource requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub task_id: String,
    pub executable: String,
    #[serde(default)]
    pub arguments: Vec<String>,
    pub cores: u32,
    #[serde(default)]
    pub is_mpi: bool,
    /// Estimated runtime in seconds.
    pub runtime_estimate: f64,
    #[serde(default)]
    pub input_files: Vec<String>,
    #[serde(default)]
    pub output_files: Vec<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl TaskDescription {
    /// Single-core, non-MPI task with no files or metadata.
    pub fn new(task_id: impl Into<String>, executable: impl Into<String>, runtime_estimate: f64) -> Self {
        Self {
            task_id: task_id.into(),
            executable: executable.into(),
            arguments: Vec::new(),
            cores: 1,
            is_mpi: false,
            runtime_estimate,
            input_files: Vec::new(),
            output_files: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Builder-style helper for MPI tasks spanning `cores` cores.
    pub fn mpi(mut self, cores: u32) -> Self {
        self.cores = cores;
        self.is_mpi = true;
        self
    }

    pub fn with_arguments<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.arguments = args.into_iter().map(Into::into).collect();
        self
    }

    pub fn core_seconds(&self) -> f64 {
        f64::from(self.cores) * self.runtime_estimate
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.task_id.is_empty() {
            return Err(TaskError::BadValue {
                field: "task_id".into(),
                reason: "must not be empty".into(),
            });
        }
        if self.cores == 0 {
            return Err(TaskError::BadValue {
                field: "cores".into(),
                reason: "must be at least 1".into(),
            });
        }
        if !(self.runtime_estimate.is_finite() && self.runtime_estimate > 0.0) {
            return Err(TaskError::BadValue {
                field: "runtime_estimate".into(),
                reason: format!("must be a positive number of seconds, got {}", self.runtime_estimate),
            });
        }
        if !self.is_mpi && self.cores > 1 {
            match self.metadata.get(THREADS_PER_TASK_KEY).map(|v| v.parse::<u32>()) {
                Some(Ok(threads)) if threads == self.cores => {}
                Some(Ok(threads)) => {
                    return Err(TaskError::BadValue {
                        field: "cores".into(),
                        reason: format!(
                            "non-MPI task requests {} cores but {THREADS_PER_TASK_KEY}={threads}",
                            self.cores
                        ),
                    })
                }
                _ => {
                    return Err(TaskError::BadValue {
                        field: "cores".into(),
                        reason: format!(
                            "non-MPI task requests {} cores without {THREADS_PER_TASK_KEY}",
                            self.cores
                        ),
                    })
                }
            }
        }
        Ok(())
    }
}
