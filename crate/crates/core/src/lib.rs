//! Shared entity model for the blockflow building blocks.
//!
//! Tasks, workflows and workloads; pilot and job descriptions; the state
//! machines of every entity; the append-only event log; and the two
//! interfaces that let blocks be composed without knowing each other:
//! [`ResourceConnector`] and [`WorkflowExecutor`].

pub mod connector;
pub mod dag;
pub mod entities;
pub mod error;
pub mod log;
pub mod report;
pub mod state;
pub mod task;
pub mod translate;
pub mod workload;

pub use connector::{PlaceholderUpdate, QueueInfo, ResourceConnector};
pub use dag::{validate_dag, WorkflowDag};
pub use entities::{Connectivity, FailureReason, JobDescription, JobOrigin, PilotDescription};
pub use error::{DagError, LogError, ResourceError, StateError, TaskError, WorkloadError};
pub use log::{Event, EventKind, EventLog, SimClock};
pub use report::{ExecutionReport, ExecutorError, PlanEntry, TaskTiming, WorkflowExecutor};
pub use state::{next_state, EntityKind, EntityState, State, StateRecord, TransitionEvent};
pub use task::{TaskDescription, THREADS_PER_TASK_KEY};
pub use translate::{serialize_task, translate_task, ExternalTaskRecord};
pub use workload::{aggregate_requirements, dag_requirements, derive_workload, requirements_of, Workload, WorkloadRequirements};
