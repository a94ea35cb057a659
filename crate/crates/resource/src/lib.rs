//! Uniform access to batch resources: a discrete-event simulated batch
//! system with FCFS and EASY backfill queues, a local process backend, and
//! a thread-owned handle that serializes requests to either.

pub mod backend;
pub mod easy;
pub mod handle;
pub mod local;
pub mod model;
pub mod sim;

pub use backend::{Backend, JobStatus};
pub use easy::{easy_pass, replay_start, Pass, RunningJob, WaitingJob};
pub use handle::ResourceHandle;
pub use local::LocalBackend;
pub use model::{BackgroundLoad, ModelError, Policy, QueueSpec, ResourceModel, TraceEntry};
pub use sim::{SimBatch, SimJob};
