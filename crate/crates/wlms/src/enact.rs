//! Enactment: run a strategy over a pilot session, streaming the workflow's
//! workloads as dependencies are met and resubmitting work lost with a pilot.

use std::collections::{BTreeMap, BTreeSet};

use blockflow_core::{
    derive_workload, EventKind, ExecutionReport, FailureReason, PlanEntry, State, TaskTiming, WorkflowDag,
};
use blockflow_pilot::{ComputeUnit, PilotSession, StepReport};
use log::{debug, info};
use serde_json::json;

use crate::error::WlmsError;
use crate::strategy::ExecutionStrategy;

#[derive(Debug, Clone, PartialEq)]
pub struct EnactOptions {
    /// Attempts per task when failures are caused by losing the pilot.
    pub max_attempts: u32,
    /// Replacement pilots allowed; `None` means three per planned pilot.
    pub max_replacements: Option<usize>,
}

impl Default for EnactOptions {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            max_replacements: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct TaskRun {
    attempts: u32,
    unit: Option<String>,
    submitted: Option<f64>,
    state: Option<State>,
    reason: Option<FailureReason>,
}

struct Enactor<'a> {
    session: &'a mut PilotSession,
    strategy: &'a ExecutionStrategy,
    dag: &'a WorkflowDag,
    opts: &'a EnactOptions,
    runs: BTreeMap<String, TaskRun>,
    unit_task: BTreeMap<String, String>,
    completed: BTreeSet<String>,
    busy: BTreeSet<String>,
    /// Index into the strategy ranking per pilot we submitted.
    pilot_rank: BTreeMap<String, usize>,
    replacements: usize,
    resubmissions: u32,
}

/// Runs the plan to the end. Tasks that still fail after their retries
/// turn the result into [`WlmsError::ExecutionFailed`], which carries the
/// full report.
pub fn enact(
    session: &mut PilotSession,
    strategy: &ExecutionStrategy,
    dag: &WorkflowDag,
    opts: &EnactOptions,
) -> Result<ExecutionReport, WlmsError> {
    let report = enact_report(session, strategy, dag, opts)?;
    let failed = report.failed_ids();
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(WlmsError::ExecutionFailed {
            task_ids: failed,
            report: Box::new(report),
        })
    }
}

fn enact_report(
    session: &mut PilotSession,
    strategy: &ExecutionStrategy,
    dag: &WorkflowDag,
    opts: &EnactOptions,
) -> Result<ExecutionReport, WlmsError> {
    blockflow_core::validate_dag(dag)?;
    let mut e = Enactor {
        session,
        strategy,
        dag,
        opts,
        runs: dag.tasks.keys().map(|id| (id.clone(), TaskRun::default())).collect(),
        unit_task: BTreeMap::new(),
        completed: BTreeSet::new(),
        busy: BTreeSet::new(),
        pilot_rank: BTreeMap::new(),
        replacements: 0,
        resubmissions: 0,
    };
    e.run()
}

impl Enactor<'_> {
    fn run(&mut self) -> Result<ExecutionReport, WlmsError> {
        for b in &self.strategy.bindings {
            let pid = self.session.submit_pilot(b.pilot.clone())?;
            let rank = self.rank_of(&b.resource_id);
            self.pilot_rank.insert(pid, rank);
        }
        loop {
            self.ingest()?;
            if self.unfinished() == 0 {
                break;
            }
            let in_flight = self.busy.iter().any(|t| self.runs[t].state.is_none());
            if !in_flight {
                // nothing running and nothing ready: the rest is blocked on failures
                break;
            }
            if self.session.live_pilots().next().is_none() && !self.replace(None)? {
                self.abandon_pending();
                continue;
            }
            match self.session.step() {
                Some(report) => self.handle(report)?,
                None => self.abandon_pending(),
            }
        }
        Ok(self.finish())
    }

    fn rank_of(&self, resource_id: &str) -> usize {
        self.strategy
            .ranking
            .iter()
            .position(|r| r.resource_id == resource_id)
            .unwrap_or(0)
    }

    fn unfinished(&self) -> usize {
        self.runs.values().filter(|r| r.state.is_none()).count()
    }

    /// Submits every task whose dependencies are now complete.
    fn ingest(&mut self) -> Result<(), WlmsError> {
        let ready = derive_workload(self.dag, &self.completed, &self.busy, self.session.now())?;
        if ready.is_empty() {
            return Ok(());
        }
        let mut units = Vec::with_capacity(ready.len());
        for task in ready.tasks {
            let id = task.task_id.clone();
            self.busy.insert(id.clone());
            let run = self.runs.get_mut(&id).expect("task known");
            run.submitted = Some(self.session.now());
            self.session.record(&id, EventKind::TaskIngested, json!({ "attempt": 1 }));
            units.push(self.new_unit(id, task));
        }
        self.session.submit_units(units)?;
        Ok(())
    }

    fn new_unit(&mut self, task_id: String, task: blockflow_core::TaskDescription) -> ComputeUnit {
        let run = self.runs.get_mut(&task_id).expect("task known");
        run.attempts += 1;
        let uid = format!("{task_id}#{}", run.attempts);
        run.unit = Some(uid.clone());
        self.unit_task.insert(uid.clone(), task_id);
        ComputeUnit::new(uid, task)
    }

    fn handle(&mut self, report: StepReport) -> Result<(), WlmsError> {
        let mut retry = Vec::new();
        for uid in &report.finished_units {
            let Some(task_id) = self.unit_task.get(uid).cloned() else {
                continue;
            };
            let unit = self.session.unit(uid).expect("session unit");
            let (state, reason) = (unit.current(), unit.reason.clone());
            let attempts = self.runs[&task_id].attempts;
            match state {
                State::Done => {
                    self.completed.insert(task_id.clone());
                    self.busy.remove(&task_id);
                    self.runs.get_mut(&task_id).expect("run").state = Some(State::Done);
                    self.session.record(&task_id, EventKind::TaskDone, json!({ "unit": uid }));
                }
                State::Failed if reason.as_ref().is_some_and(FailureReason::is_pilot_loss) && attempts < self.opts.max_attempts => {
                    self.resubmissions += 1;
                    self.session.record(
                        &task_id,
                        EventKind::TaskResubmitted,
                        json!({ "attempt": attempts + 1, "reason": reason }),
                    );
                    let task = self.dag.tasks[&task_id].clone();
                    retry.push(self.new_unit(task_id, task));
                }
                _ => {
                    let run = self.runs.get_mut(&task_id).expect("run");
                    run.state = Some(if state == State::Canceled { State::Canceled } else { State::Failed });
                    run.reason = reason.clone();
                    let kind = if state == State::Canceled {
                        EventKind::TaskCanceled
                    } else {
                        EventKind::TaskFailed
                    };
                    self.session.record(&task_id, kind, json!({ "reason": reason }));
                }
            }
        }
        if !retry.is_empty() {
            self.session.submit_units(retry)?;
        }
        for pid in &report.ended_pilots {
            let lost = self.session.pilot(pid).map(|p| p.current()) != Some(State::Done);
            let work_left = self.unfinished() > 0;
            let none_alive = self.session.live_pilots().next().is_none();
            if work_left && (lost || none_alive) {
                self.replace(Some(pid))?;
            }
        }
        Ok(())
    }

    /// Submits a replacement pilot: the ended pilot's description (or the
    /// first planned one) on the next resource in the ranking.
    fn replace(&mut self, ended: Option<&String>) -> Result<bool, WlmsError> {
        let budget = self
            .opts
            .max_replacements
            .unwrap_or(3 * self.strategy.bindings.len().max(1));
        if self.replacements >= budget || self.strategy.ranking.is_empty() {
            return Ok(false);
        }
        let (template, rank) = match ended.and_then(|pid| self.session.pilot(pid).map(|p| (p.desc.clone(), pid))) {
            Some((pd, pid)) => (pd, self.pilot_rank.get(pid).copied().unwrap_or(0)),
            None => match self.strategy.bindings.first() {
                Some(b) => (b.pilot.clone(), self.rank_of(&b.resource_id)),
                None => return Ok(false),
            },
        };
        let next = (rank + 1) % self.strategy.ranking.len();
        let target = &self.strategy.ranking[next];
        let mut pd = template;
        pd.target_resource = target.resource_id.clone();
        pd.queue_name = target.queue.clone();
        pd.cores = pd.cores.min(target.total_cores);
        pd.duration = pd.duration.min(target.max_walltime);
        self.replacements += 1;
        info!("replacement pilot on {} ({} cores, {} s)", pd.target_resource, pd.cores, pd.duration);
        let pid = self.session.submit_pilot(pd)?;
        self.pilot_rank.insert(pid, next);
        Ok(true)
    }

    /// No pilot will ever run the pending units: give up on them.
    fn abandon_pending(&mut self) {
        let pending: Vec<String> = self.session.pending().map(str::to_string).collect();
        debug!("abandoning {} pending units", pending.len());
        for uid in self.session.cancel_pending(&pending) {
            let task_id = self.unit_task[&uid].clone();
            let run = self.runs.get_mut(&task_id).expect("run");
            run.state = Some(State::Failed);
            run.reason = Some(FailureReason::Unschedulable);
            self.session.record(&task_id, EventKind::TaskFailed, json!({ "reason": FailureReason::Unschedulable }));
        }
        // units still executing with no pilot cannot exist; anything else
        // left in flight has already been accounted for
        if self.session.live_pilots().next().is_none() {
            let stuck: Vec<String> = self
                .runs
                .iter()
                .filter(|(id, r)| r.state.is_none() && self.busy.contains(*id))
                .map(|(id, _)| id.clone())
                .collect();
            for id in stuck {
                let run = self.runs.get_mut(&id).expect("run");
                run.state = Some(State::Failed);
                run.reason = Some(FailureReason::Unschedulable);
                self.session.record(&id, EventKind::TaskFailed, json!({ "reason": FailureReason::Unschedulable }));
            }
        }
    }

    fn finish(&mut self) -> ExecutionReport {
        // tasks that never became ready sit behind a failure
        let blocked: Vec<String> = self
            .runs
            .iter()
            .filter(|(_, r)| r.state.is_none() && r.unit.is_none())
            .map(|(id, _)| id.clone())
            .collect();
        for id in blocked {
            self.runs.get_mut(&id).expect("run").state = Some(State::Canceled);
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
                let resource = unit
                    .and_then(|u| u.bound_pilot.as_deref())
                    .and_then(|p| self.session.pilot(p))
                    .map(|p| p.desc.target_resource.clone());
                TaskTiming {
                    task_id: id.clone(),
                    submitted: run.submitted,
                    start: unit.and_then(|u| u.start),
                    end: unit.and_then(|u| u.end),
                    state: run.state.unwrap_or(State::Canceled),
                    attempts: run.attempts,
                    resource,
                    reason: run.reason.clone(),
                }
            })
            .collect();
        let plan = self
            .strategy
            .bindings
            .iter()
            .map(|b| PlanEntry {
                resource_id: b.resource_id.clone(),
                pilot_cores: b.pilot.cores,
                pilot_duration: b.pilot.duration,
                partition_len: b.partition.len(),
            })
            .collect();
        ExecutionReport::from_timings(timings, self.resubmissions, plan)
    }
}
