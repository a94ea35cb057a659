use thiserror::Error;

use crate::state::{EntityKind, State, TransitionEvent};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("bad value for `{field}`: {reason}")]
    BadValue { field: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("edge references unknown task `{0}`")]
    UnknownEndpoint(String),
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("self-edge on task `{0}`")]
    SelfEdge(String),
    #[error("invalid task `{id}`: {reason}")]
    InvalidTask { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("invalid dag: {0}")]
    InvalidDag(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("illegal transition for {kind:?}: {event:?} from {from:?}")]
    IllegalTransition {
        kind: EntityKind,
        from: State,
        event: TransitionEvent,
    },
    #[error("transition at t={at} precedes last history record at t={last}")]
    TimeRegression { last: f64, at: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("event at t={at} precedes log head at t={last}")]
    TimeRegression { last: f64, at: f64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Errors surfaced by a resource-access layer, shared by every backend and
/// by the connector interface the pilot runtime uses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResourceError {
    #[error("job requests {requested} cores but resource `{resource}` has {available}")]
    OversizedJob {
        resource: String,
        requested: u32,
        available: u32,
    },
    #[error("unknown queue `{0}`")]
    UnknownQueue(String),
    #[error("walltime {requested}s exceeds queue `{queue}` limit of {limit}s")]
    WalltimeExceedsQueueLimit {
        queue: String,
        requested: f64,
        limit: f64,
    },
    #[error("invalid job description: {0}")]
    InvalidJob(String),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}
