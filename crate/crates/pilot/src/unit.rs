use blockflow_core::{EntityKind, EntityState, FailureReason, State, TaskDescription};
use serde::Serialize;

/// The schedulable form of a task inside the pilot runtime.
#[derive(Debug, Clone, Serialize)]
pub struct ComputeUnit {
    pub unit_id: String,
    pub task: TaskDescription,
    pub state: EntityState,
    pub bound_pilot: Option<String>,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub reason: Option<FailureReason>,
}

impl ComputeUnit {
    pub fn new(unit_id: impl Into<String>, task: TaskDescription) -> Self {
        Self {
            unit_id: unit_id.into(),
            task,
            state: EntityState::new(EntityKind::Task, 0.0, "unit-manager"),
            bound_pilot: None,
            start: None,
            end: None,
            reason: None,
        }
    }

    /// Unit whose id is the task id.
    pub fn from_task(task: TaskDescription) -> Self {
        Self::new(task.task_id.clone(), task)
    }

    pub fn current(&self) -> State {
        self.state.current()
    }

    pub fn is_terminal(&self) -> bool {
        self.state.current().is_terminal()
    }

    /// Time the unit was bound to a pilot.
    pub fn bound_at(&self) -> Option<f64> {
        self.state.entered(State::Scheduled)
    }
}
