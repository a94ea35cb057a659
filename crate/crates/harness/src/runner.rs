//! Wires the building blocks together for one scenario run.

use std::collections::{BTreeMap, BTreeSet};

use blockflow_core::{
    derive_workload, EventKind, EventLog, ExecutionReport, FailureReason, PlanEntry, ResourceConnector, State,
    TaskTiming, WorkflowDag,
};
use blockflow_pilot::{ComputeUnit, PilotSession, StepReport};
use blockflow_resource::{ResourceModel, SimBatch};
use blockflow_wlms::{enact_direct, SimulatedWlms, WlmsError};
use log::{info, warn};
use serde_json::json;

use crate::error::{config, HarnessError};
use crate::metrics::{compute_metrics, resource_utilization, Metrics};
use crate::scenario::{Composition, Scenario};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: String,
    pub log: EventLog,
    pub report: ExecutionReport,
    pub metrics: Metrics,
    pub resource_utilization: BTreeMap<String, f64>,
}

impl RunOutput {
    /// Fails if any task did not finish.
    pub fn check(&self) -> Result<(), HarnessError> {
        let failed = self.report.failed_ids();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::ExecutionFailed(failed))
        }
    }
}

/// Runs a scenario to the end. Task failures are part of the output, not
/// an error; use [`RunOutput::check`] to turn them into one.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, HarnessError> {
    scenario.validate()?;
    let dag = scenario.workflow()?;
    let models = scenario.models();
    info!(
        "scenario {}: {} tasks, {:?}, seed {}",
        scenario.name,
        dag.len(),
        scenario.composition,
        scenario.seed
    );
    let (report, log) = if dag.is_empty() {
        (ExecutionReport::default(), EventLog::new())
    } else {
        match scenario.composition {
            Composition::FullStack => full_stack(scenario, &dag, models)?,
            Composition::PilotOnly => pilot_only(scenario, &dag, &models)?,
            Composition::WlmsOnly => wlms_only(scenario, &dag, models)?,
        }
    };
    let metrics = compute_metrics(&log)?;
    let resource_utilization = resource_utilization(&log)?;
    Ok(RunOutput {
        scenario: scenario.name.clone(),
        log,
        report,
        metrics,
        resource_utilization,
    })
}

fn full_stack(
    scenario: &Scenario,
    dag: &WorkflowDag,
    models: Vec<ResourceModel>,
) -> Result<(ExecutionReport, EventLog), HarnessError> {
    let mut wlms = SimulatedWlms::new(models).with_config(scenario.strategy.clone());
    wlms.faults = scenario.faults.clone();
    wlms.perturbation = scenario.perturbation();
    let report = match wlms.run(dag) {
        Ok(r) => r,
        Err(WlmsError::ExecutionFailed { report, .. }) => *report,
        Err(e) => return Err(HarnessError::Execution(e.to_string())),
    };
    Ok((report, wlms.log().clone()))
}

fn wlms_only(
    scenario: &Scenario,
    dag: &WorkflowDag,
    models: Vec<ResourceModel>,
) -> Result<(ExecutionReport, EventLog), HarnessError> {
    if !scenario.faults.is_empty() {
        warn!("faults target pilots and units; they are ignored without a pilot runtime");
    }
    let planner = SimulatedWlms::new(models.clone()).with_config(scenario.strategy.clone());
    let strategy = planner.plan(dag).map_err(|e| HarnessError::Execution(e.to_string()))?;
    let mut connectors: BTreeMap<String, Box<dyn ResourceConnector>> = BTreeMap::new();
    for m in models {
        let id = m.resource_id.clone();
        connectors.insert(id, Box::new(SimBatch::new(m).map_err(config)?));
    }
    enact_direct(&mut connectors, &strategy, dag, scenario.strategy.safety_factor)
        .map_err(|e| HarnessError::Execution(e.to_string()))
}

#[derive(Default)]
struct TaskRun {
    unit: Option<String>,
    submitted: Option<f64>,
    state: Option<State>,
    reason: Option<FailureReason>,
}

/// Pilots as given by the scenario, each submitted at its own time and
/// left to run out; ready tasks are handed to the pilot runtime as soon as
/// their dependencies are done. Nothing is retried.
struct PilotOnly<'a> {
    dag: &'a WorkflowDag,
    session: PilotSession,
    runs: BTreeMap<String, TaskRun>,
    completed: BTreeSet<String>,
    busy: BTreeSet<String>,
}

fn pilot_only(
    scenario: &Scenario,
    dag: &WorkflowDag,
    models: &[ResourceModel],
) -> Result<(ExecutionReport, EventLog), HarnessError> {
    let mut session = PilotSession::new().with_faults(scenario.faults.clone());
    if let Some(p) = scenario.perturbation() {
        session = session.with_perturbation(p);
    }
    for m in models {
        session
            .add_connector(Box::new(SimBatch::new(m.clone()).map_err(config)?))
            .map_err(config)?;
    }
    let mut pilots = scenario.pilots.clone();
    pilots.sort_by(|a, b| a.submit_at.total_cmp(&b.submit_at));
    let mut driver = PilotOnly {
        dag,
        session,
        runs: dag.tasks.keys().map(|id| (id.clone(), TaskRun::default())).collect(),
        completed: BTreeSet::new(),
        busy: BTreeSet::new(),
    };
    let exec = |e: blockflow_pilot::PilotError| HarnessError::Execution(e.to_string());

    let mut next = 0;
    loop {
        while next < pilots.len() && pilots[next].submit_at <= driver.session.now() {
            driver.session.submit_pilot(pilots[next].pilot.clone()).map_err(exec)?;
            next += 1;
        }
        driver.ingest()?;
        // pilots run out their walltime even when the work is done
        if next == pilots.len() && driver.session.live_pilots().next().is_none() {
            break;
        }
        let due = pilots.get(next).map(|p| p.submit_at);
        match (driver.session.next_event_time(), due) {
            (None, None) => break,
            (Some(_), None) => {
                let step = driver.session.step().expect("event is due");
                driver.handle(&step);
            }
            (_, Some(d)) => {
                while let Some(step) = driver.session.step_until(d) {
                    driver.handle(&step);
                }
                for step in driver.session.advance_to(d) {
                    driver.handle(&step);
                }
            }
        }
    }
    let plan = pilots
        .iter()
        .map(|p| PlanEntry {
            resource_id: p.pilot.target_resource.clone(),
            pilot_cores: p.pilot.cores,
            pilot_duration: p.pilot.duration,
            partition_len: 0,
        })
        .collect();
    Ok(driver.finish(plan))
}

impl PilotOnly<'_> {
    fn ingest(&mut self) -> Result<(), HarnessError> {
        let now = self.session.now();
        let ready = derive_workload(self.dag, &self.completed, &self.busy, now).map_err(config)?;
        let mut units = Vec::with_capacity(ready.len());
        for task in ready.tasks {
            let id = task.task_id.clone();
            let uid = format!("{id}#1");
            self.session.record(&id, EventKind::TaskIngested, json!({ "attempt": 1 }));
            let run = self.runs.get_mut(&id).expect("task known");
            run.unit = Some(uid.clone());
            run.submitted = Some(now);
            self.busy.insert(id);
            units.push(ComputeUnit::new(uid, task));
        }
        if !units.is_empty() {
            self.session
                .submit_units(units)
                .map_err(|e| HarnessError::Execution(e.to_string()))?;
        }
        Ok(())
    }

    fn handle(&mut self, step: &StepReport) {
        for uid in &step.finished_units {
            let task_id = uid.split('#').next().unwrap_or(uid).to_string();
            let unit = self.session.unit(uid).expect("finished unit");
            let (state, reason) = (unit.current(), unit.reason.clone());
            let run = self.runs.get_mut(&task_id).expect("task known");
            run.state = Some(state);
            run.reason = reason.clone();
            match state {
                State::Done => {
                    self.completed.insert(task_id.clone());
                    self.busy.remove(&task_id);
                    self.session.record(&task_id, EventKind::TaskDone, json!({ "unit": uid }));
                }
                State::Canceled => self.session.record(&task_id, EventKind::TaskCanceled, json!({ "reason": reason })),
                _ => self.session.record(&task_id, EventKind::TaskFailed, json!({ "reason": reason })),
            }
        }
    }

    fn finish(mut self, plan: Vec<PlanEntry>) -> (ExecutionReport, EventLog) {
        let pending: Vec<String> = self.session.pending().map(str::to_string).collect();
        for uid in self.session.cancel_pending(&pending) {
            let task_id = uid.split('#').next().unwrap_or(&uid).to_string();
            let run = self.runs.get_mut(&task_id).expect("task known");
            run.state = Some(State::Failed);
            run.reason = Some(FailureReason::Unschedulable);
            self.session
                .record(&task_id, EventKind::TaskFailed, json!({ "reason": FailureReason::Unschedulable }));
        }
        let blocked: Vec<String> = self
            .runs
            .iter()
            .filter(|(_, r)| r.state.is_none())
            .map(|(id, _)| id.clone())
            .collect();
        for id in blocked {
            self.runs.get_mut(&id).expect("task known").state = Some(State::Canceled);
            self.session.record(&id, EventKind::TaskCanceled, json!({ "reason": "upstream failure" }));
        }
        let live: Vec<String> = self.session.live_pilots().map(|p| p.pilot_id.clone()).collect();
        for pid in live {
            let _ = self.session.cancel_pilot(&pid);
        }
        let timings = self
            .runs
            .iter()
            .map(|(id, run)| {
                let unit = run.unit.as_deref().and_then(|u| self.session.unit(u));
                TaskTiming {
                    task_id: id.clone(),
                    submitted: run.submitted,
                    start: unit.and_then(|u| u.start),
                    end: unit.and_then(|u| u.end),
                    state: run.state.unwrap_or(State::Canceled),
                    attempts: u32::from(run.unit.is_some()),
                    resource: unit
                        .and_then(|u| u.bound_pilot.as_deref())
                        .and_then(|p| self.session.pilot(p))
                        .map(|p| p.desc.target_resource.clone()),
                    reason: run.reason.clone(),
                }
            })
            .collect();
        (ExecutionReport::from_timings(timings, 0, plan), self.session.into_log())
    }
}
