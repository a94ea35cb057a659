//! The interface a pilot system uses to acquire resources.
//!
//! Any resource-access layer can sit behind this trait; the pilot runtime
//! only ever sees placeholder jobs starting and ending.

use serde::{Deserialize, Serialize};

use crate::entities::{Connectivity, FailureReason, JobDescription};
use crate::error::ResourceError;
use crate::log::Event;
use crate::state::State;

/// A state change of a job submitted through a connector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceholderUpdate {
    pub job_id: String,
    pub time: f64,
    pub state: State,
    pub reason: Option<FailureReason>,
}

/// Queue characteristics a client may need to size its requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueInfo {
    pub name: String,
    pub max_walltime: f64,
}

pub trait ResourceConnector {
    fn resource_id(&self) -> &str;

    fn total_cores(&self) -> u32;

    fn connectivity(&self) -> Connectivity {
        Connectivity::Full
    }

    fn queues(&self) -> Vec<QueueInfo>;

    fn now(&self) -> f64;

    fn submit(&mut self, jd: JobDescription) -> Result<String, ResourceError>;

    fn cancel(&mut self, job_id: &str) -> Result<(), ResourceError>;

    /// Time of the next internal event, if any is pending.
    fn next_event_time(&self) -> Option<f64>;

    /// Moves the resource clock to `until` and returns the placeholder
    /// updates produced on the way (including any caused by earlier
    /// `submit`/`cancel` calls).
    fn advance(&mut self, until: f64) -> Vec<PlaceholderUpdate>;

    /// Raw resource events recorded since the previous call.
    fn drain_events(&mut self) -> Vec<Event> {
        Vec::new()
    }
}
