//! Workloads: the dependency-satisfied slice of a workflow at an instant.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dag::{validate_dag, WorkflowDag};
use crate::error::WorkloadError;
use crate::task::TaskDescription;

/// Tasks that may run concurrently at `snapshot_time`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub tasks: Vec<TaskDescription>,
    pub snapshot_time: f64,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.task_id.as_str()).collect()
    }
}

/// Aggregated resource demand of a set of tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRequirements {
    pub max_concurrency_cores: u64,
    pub total_core_seconds: f64,
    pub longest_task_runtime: f64,
    pub largest_task_cores: u32,
    pub task_count: usize,
}

/// Returns the tasks that are neither completed nor in flight and whose
/// predecessors are all completed, sorted by task id.
pub fn derive_workload(
    dag: &WorkflowDag,
    completed: &BTreeSet<String>,
    in_flight: &BTreeSet<String>,
    now: f64,
) -> Result<Workload, WorkloadError> {
    validate_dag(dag).map_err(|e| WorkloadError::InvalidDag(e.to_string()))?;
    if let Some(id) = completed.intersection(in_flight).next() {
        return Err(WorkloadError::InvalidDag(format!(
            "task `{id}` is both completed and in flight"
        )));
    }
    if let Some(id) = completed.iter().chain(in_flight).find(|id| !dag.tasks.contains_key(*id)) {
        return Err(WorkloadError::InvalidDag(format!("unknown task `{id}`")));
    }
    let preds = dag.predecessor_map();
    // BTreeMap iteration already yields ids in sorted order
    let tasks = dag
        .tasks
        .iter()
        .filter(|(id, _)| !completed.contains(*id) && !in_flight.contains(*id))
        .filter(|(id, _)| preds[id.as_str()].iter().all(|p| completed.contains(*p)))
        .map(|(_, t)| t.clone())
        .collect();
    Ok(Workload {
        tasks,
        snapshot_time: now,
    })
}

pub fn aggregate_requirements(workload: &Workload) -> WorkloadRequirements {
    requirements_of(&workload.tasks)
}

/// Requirements of an arbitrary task slice, treating every task as concurrent.
pub fn requirements_of(tasks: &[TaskDescription]) -> WorkloadRequirements {
    tasks.iter().fold(WorkloadRequirements::default(), |acc, t| WorkloadRequirements {
        max_concurrency_cores: acc.max_concurrency_cores + u64::from(t.cores),
        total_core_seconds: acc.total_core_seconds + t.core_seconds(),
        longest_task_runtime: acc.longest_task_runtime.max(t.runtime_estimate),
        largest_task_cores: acc.largest_task_cores.max(t.cores),
        task_count: acc.task_count + 1,
    })
}

/// Requirements of a whole workflow. Concurrency is the widest dependency
/// level (tasks grouped by longest-path depth), not the sum over all tasks.
pub fn dag_requirements(dag: &WorkflowDag) -> WorkloadRequirements {
    let all: Vec<TaskDescription> = dag.tasks.values().cloned().collect();
    let mut reqs = requirements_of(&all);
    reqs.max_concurrency_cores = level_widths(dag).into_iter().max().unwrap_or(0);
    reqs
}

/// Sum of cores per dependency level.
fn level_widths(dag: &WorkflowDag) -> Vec<u64> {
    let Ok(order) = dag.topological_order() else {
        return Vec::new();
    };
    let preds = dag.predecessor_map();
    let mut depth = std::collections::BTreeMap::new();
    let mut widths: Vec<u64> = Vec::new();
    for id in &order {
        let d = preds[id.as_str()]
            .iter()
            .map(|p| depth[*p] + 1)
            .max()
            .unwrap_or(0usize);
        depth.insert(id.as_str(), d);
        if widths.len() <= d {
            widths.resize(d + 1, 0);
        }
        widths[d] += u64::from(dag.tasks[id].cores);
    }
    widths
}
