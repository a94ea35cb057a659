//! Pilot runtime: acquire resource placeholders through any
//! [`ResourceConnector`](blockflow_core::ResourceConnector), late-bind
//! compute units onto them once they are active, and run the units inside
//! per-pilot agents that manage core slots.

pub mod agent;
pub mod capacity;
pub mod dedicated;
pub mod scheduler;
pub mod session;
pub mod unit;

pub use agent::{Agent, AgentEvent, AgentEventKind};
pub use capacity::{AggregatedCapacity, PilotCapacity};
pub use dedicated::DedicatedConnector;
pub use scheduler::{bind_units, PilotSlot, RoundRobinScheduler, UnitRequest, UnitScheduler};
pub use session::{Fault, FaultKind, Perturbation, Pilot, PilotError, PilotSession, StepReport};
pub use unit::ComputeUnit;
