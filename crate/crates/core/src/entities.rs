//! Pilot and job descriptions plus the reasons entities fail.

use serde::{Deserialize, Serialize};

/// Who asked for a job. Background jobs model competing users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobOrigin {
    Pilot,
    Task,
    Background,
}

/// A resource-specific job request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobDescription {
    pub cores: u32,
    pub walltime_limit: f64,
    pub executable: String,
    #[serde(default)]
    pub arguments: Vec<String>,
    pub queue_name: String,
    #[serde(default)]
    pub project: String,
    /// Simulated runtime. `None` holds the allocation until the walltime
    /// limit; a value above the limit makes the job fail at the limit.
    #[serde(default)]
    pub runtime: Option<f64>,
    pub origin: JobOrigin,
}

impl JobDescription {
    pub fn new(cores: u32, walltime_limit: f64, queue_name: impl Into<String>) -> Self {
        Self {
            cores,
            walltime_limit,
            executable: String::new(),
            arguments: Vec::new(),
            queue_name: queue_name.into(),
            project: String::new(),
            runtime: None,
            origin: JobOrigin::Task,
        }
    }

    pub fn with_command<I, S>(mut self, executable: impl Into<String>, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.executable = executable.into();
        self.arguments = args.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_runtime(mut self, runtime: f64) -> Self {
        self.runtime = Some(runtime);
        self
    }

    pub fn with_origin(mut self, origin: JobOrigin) -> Self {
        self.origin = origin;
        self
    }
}

/// A resource placeholder request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotDescription {
    pub cores: u32,
    pub duration: f64,
    pub target_resource: String,
    pub queue_name: String,
}

impl PilotDescription {
    pub fn new(cores: u32, duration: f64, target_resource: impl Into<String>, queue_name: impl Into<String>) -> Self {
        Self {
            cores,
            duration,
            target_resource: target_resource.into(),
            queue_name: queue_name.into(),
        }
    }

    /// The batch job that carries this pilot.
    pub fn to_job_description(&self, project: &str) -> JobDescription {
        JobDescription {
            cores: self.cores,
            walltime_limit: self.duration,
            executable: "pilot-agent".into(),
            arguments: Vec::new(),
            queue_name: self.queue_name.clone(),
            project: project.to_string(),
            runtime: None,
            origin: JobOrigin::Pilot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Killed at its walltime limit.
    Walltime,
    /// The pilot reached the end of its lifetime while the unit ran.
    PilotExpired,
    /// The pilot was terminated early (fault or cancellation).
    PilotKilled,
    /// No live pilot can ever host the unit.
    Unschedulable,
    /// Failure injected by a scenario.
    Injected,
    /// A local process exited unsuccessfully.
    ExitStatus(i32),
    /// A local process could not be launched.
    Spawn(String),
}

impl FailureReason {
    /// Failures caused by losing the pilot rather than by the task itself.
    pub fn is_pilot_loss(&self) -> bool {
        matches!(self, FailureReason::PilotExpired | FailureReason::PilotKilled)
    }
}

/// Whether compute nodes can reach the wide-area network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    #[default]
    Full,
    None,
}
