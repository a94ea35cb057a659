//! Execution results and the executor interface front ends drive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::WorkflowDag;
use crate::entities::FailureReason;
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub task_id: String,
    pub submitted: Option<f64>,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub state: State,
    pub attempts: u32,
    pub resource: Option<String>,
    pub reason: Option<FailureReason>,
}

/// One planned pilot, as recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub resource_id: String,
    pub pilot_cores: u32,
    pub pilot_duration: f64,
    pub partition_len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    /// Last task end minus first task submission.
    pub ttc: f64,
    /// Sorted by task id.
    pub tasks: Vec<TaskTiming>,
    pub resubmissions: u32,
    pub plan: Vec<PlanEntry>,
}

impl ExecutionReport {
    /// Builds a report, deriving ttc from the task timings.
    pub fn from_timings(mut tasks: Vec<TaskTiming>, resubmissions: u32, plan: Vec<PlanEntry>) -> Self {
        tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let first = tasks.iter().filter_map(|t| t.submitted).fold(f64::INFINITY, f64::min);
        let last = tasks.iter().filter_map(|t| t.end).fold(f64::NEG_INFINITY, f64::max);
        let ttc = if first.is_finite() && last.is_finite() { (last - first).max(0.0) } else { 0.0 };
        Self {
            ttc,
            tasks,
            resubmissions,
            plan,
        }
    }

    pub fn task(&self, id: &str) -> Option<&TaskTiming> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    pub fn count(&self, state: State) -> usize {
        self.tasks.iter().filter(|t| t.state == state).count()
    }

    pub fn failed_ids(&self) -> Vec<String> {
        self.tasks
            .iter()
            .filter(|t| t.state != State::Done)
            .map(|t| t.task_id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecutorError {
    #[error("tasks did not complete: {}", task_ids.join(", "))]
    Failed {
        task_ids: Vec<String>,
        report: Box<ExecutionReport>,
    },
    #[error("{0}")]
    Rejected(String),
}

/// Anything that can run a workflow to completion.
pub trait WorkflowExecutor {
    fn execute(&mut self, dag: &WorkflowDag) -> Result<ExecutionReport, ExecutorError>;
}
