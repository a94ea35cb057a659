//! Strategy-only composition: tasks go to the planned resources as plain
//! batch jobs, without pilots.

use std::collections::{BTreeMap, BTreeSet};

use blockflow_core::{
    derive_workload, validate_dag, EventKind, EventLog, ExecutionReport, JobDescription, JobOrigin, PlanEntry,
    ResourceConnector, State, TaskTiming, WorkflowDag,
};
use serde_json::json;

use crate::error::WlmsError;
use crate::strategy::ExecutionStrategy;

#[derive(Debug, Default, Clone)]
struct JobRun {
    resource: String,
    job_id: Option<String>,
    submitted: Option<f64>,
    start: Option<f64>,
    end: Option<f64>,
    state: Option<State>,
    reason: Option<blockflow_core::FailureReason>,
}

/// Runs every task as its own job on the resource its partition names.
/// Job walltimes are the runtime estimate times `safety_factor`. Failed
/// tasks are reported, not retried; errors are setup problems only.
pub fn enact_direct(
    connectors: &mut BTreeMap<String, Box<dyn ResourceConnector>>,
    strategy: &ExecutionStrategy,
    dag: &WorkflowDag,
    safety_factor: f64,
) -> Result<(ExecutionReport, EventLog), WlmsError> {
    validate_dag(dag)?;
    let mut log = EventLog::new();
    let mut runs: BTreeMap<String, JobRun> = BTreeMap::new();
    for id in dag.tasks.keys() {
        let binding = strategy
            .partition_of(id)
            .or(strategy.bindings.first())
            .ok_or(WlmsError::EmptyWorkload)?;
        runs.insert(
            id.clone(),
            JobRun {
                resource: binding.resource_id.clone(),
                ..Default::default()
            },
        );
    }
    let mut by_job: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut completed = BTreeSet::new();
    let mut busy = BTreeSet::new();
    let mut now = connectors.values().map(|c| c.now()).fold(0.0, f64::max);

    loop {
        let ready = derive_workload(dag, &completed, &busy, now)?;
        for task in ready.tasks {
            let run = runs.get_mut(&task.task_id).expect("task known");
            let connector = connectors
                .get_mut(&run.resource)
                .ok_or_else(|| WlmsError::Model(format!("no connector for {}", run.resource)))?;
            let queue = strategy
                .ranking
                .iter()
                .find(|r| r.resource_id == run.resource)
                .map(|r| (r.queue.clone(), r.max_walltime))
                .unwrap_or_else(|| ("batch".into(), f64::INFINITY));
            let jd = JobDescription::new(task.cores, (task.runtime_estimate * safety_factor).min(queue.1), queue.0)
                .with_command(task.executable.clone(), task.arguments.clone())
                .with_runtime(task.runtime_estimate)
                .with_origin(JobOrigin::Task);
            log.record(now, &task.task_id, EventKind::TaskIngested, json!({ "attempt": 1 }));
            let job_id = connector.submit(jd)?;
            for e in connector.drain_events() {
                log.append(e).expect("connector events are ordered");
            }
            busy.insert(task.task_id.clone());
            run.submitted = Some(now);
            run.job_id = Some(job_id.clone());
            by_job.insert((run.resource.clone(), job_id), task.task_id.clone());
        }
        let in_flight = runs.values().any(|r| r.job_id.is_some() && r.state.is_none());
        if !in_flight {
            break;
        }
        let Some(t) = connectors.values().filter_map(|c| c.next_event_time()).reduce(f64::min) else {
            break;
        };
        now = t.max(now);
        for (rid, connector) in connectors.iter_mut() {
            let updates = connector.advance(now);
            for e in connector.drain_events() {
                log.append(e).expect("connector events are ordered");
            }
            for u in updates {
                let Some(task_id) = by_job.get(&(rid.clone(), u.job_id.clone())) else {
                    continue;
                };
                let run = runs.get_mut(task_id).expect("task known");
                match u.state {
                    State::Running => run.start = Some(u.time),
                    State::Done => {
                        run.end = Some(u.time);
                        run.state = Some(State::Done);
                        completed.insert(task_id.clone());
                        busy.remove(task_id);
                        log.record(u.time, task_id, EventKind::TaskDone, serde_json::Value::Null);
                    }
                    s if s.is_terminal() => {
                        run.end = Some(u.time);
                        run.state = Some(State::Failed);
                        run.reason = u.reason.clone();
                        log.record(u.time, task_id, EventKind::TaskFailed, json!({ "reason": u.reason }));
                    }
                    _ => {}
                }
            }
        }
    }

    let timings = runs
        .into_iter()
        .map(|(id, r)| {
            let state = r.state.unwrap_or(State::Canceled);
            if r.job_id.is_none() {
                log.record(now, &id, EventKind::TaskCanceled, json!({ "reason": "upstream failure" }));
            }
            TaskTiming {
                task_id: id,
                submitted: r.submitted,
                start: r.start,
                end: r.end,
                state,
                attempts: u32::from(r.job_id.is_some()),
                resource: Some(r.resource),
                reason: r.reason,
            }
        })
        .collect();
    let plan = strategy
        .bindings
        .iter()
        .map(|b| PlanEntry {
            resource_id: b.resource_id.clone(),
            pilot_cores: 0,
            pilot_duration: 0.0,
            partition_len: b.partition.len(),
        })
        .collect();
    Ok((ExecutionReport::from_timings(timings, 0, plan), log))
}
