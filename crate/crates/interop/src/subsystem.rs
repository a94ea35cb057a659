//! The pilot runtime embedded as an independent subsystem.
//!
//! The caller hands over a batch of ready, independent tasks and gets back
//! only their terminal states. Nothing in between is observable.

use std::collections::BTreeSet;

use blockflow_core::{ExecutionReport, FailureReason, PilotDescription, State, TaskDescription, TaskTiming};
use blockflow_pilot::{ComputeUnit, PilotSession};

use crate::error::InteropError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BatchId(pub usize);

struct Batch {
    units: Vec<String>,
    submitted: f64,
}

pub struct Subsystem {
    session: PilotSession,
    batches: Vec<Batch>,
}

impl Subsystem {
    pub fn new(mut session: PilotSession, pilots: Vec<PilotDescription>) -> Result<Self, InteropError> {
        for pd in pilots {
            session.submit_pilot(pd)?;
        }
        Ok(Self {
            session,
            batches: Vec::new(),
        })
    }

    /// Read-only view for auditing after the fact.
    pub fn session(&self) -> &PilotSession {
        &self.session
    }

    pub fn into_session(self) -> PilotSession {
        self.session
    }

    /// Hands over a batch. Dependencies are the caller's business: tasks of
    /// one batch must not name each other as inputs.
    pub fn submit(&mut self, tasks: Vec<TaskDescription>) -> Result<BatchId, InteropError> {
        let outputs: BTreeSet<&String> = tasks.iter().flat_map(|t| &t.output_files).collect();
        if let Some(t) = tasks.iter().find(|t| t.input_files.iter().any(|f| outputs.contains(f))) {
            return Err(InteropError::NotIndependent(t.task_id.clone()));
        }
        let units: Vec<ComputeUnit> = tasks.into_iter().map(ComputeUnit::from_task).collect();
        let ids = self.session.submit_units(units)?;
        self.batches.push(Batch {
            units: ids,
            submitted: self.session.now(),
        });
        Ok(BatchId(self.batches.len() - 1))
    }

    fn batch(&self, id: BatchId) -> Result<&Batch, InteropError> {
        self.batches.get(id.0).ok_or(InteropError::UnknownBatch(id.0))
    }

    fn done(&self, batch: &Batch) -> bool {
        batch
            .units
            .iter()
            .all(|u| self.session.unit(u).is_some_and(ComputeUnit::is_terminal))
    }

    /// Advances the subsystem by one instant. False once nothing can happen.
    pub fn step(&mut self) -> bool {
        self.session.unfinished_units() > 0 && self.session.step().is_some()
    }

    /// Terminal results of a batch, or [`InteropError::NotAvailable`] while
    /// any of its tasks is still in progress.
    pub fn status(&self, id: BatchId) -> Result<ExecutionReport, InteropError> {
        let batch = self.batch(id)?;
        if !self.done(batch) {
            return Err(InteropError::NotAvailable);
        }
        let timings = batch
            .units
            .iter()
            .map(|uid| {
                let u = self.session.unit(uid).expect("batch unit");
                TaskTiming {
                    task_id: u.task.task_id.clone(),
                    submitted: Some(batch.submitted),
                    start: u.start,
                    end: u.end,
                    state: u.current(),
                    attempts: 1,
                    resource: None,
                    reason: u.reason.clone(),
                }
            })
            .collect();
        Ok(ExecutionReport::from_timings(timings, 0, Vec::new()))
    }

    /// Runs until the batch is terminal. Units no pilot will ever take are
    /// given up as unschedulable.
    pub fn wait(&mut self, id: BatchId) -> Result<ExecutionReport, InteropError> {
        self.batch(id)?;
        while !self.done(&self.batches[id.0]) {
            if !self.step() {
                let stuck: Vec<String> = self.session.pending().map(str::to_string).collect();
                self.session.cancel_pending(&stuck);
                break;
            }
        }
        let mut report = self.status(id)?;
        for t in &mut report.tasks {
            if t.state == State::Canceled && t.reason.is_none() {
                t.reason = Some(FailureReason::Unschedulable);
            }
        }
        Ok(report)
    }

    /// Submits and waits in one call.
    pub fn run(&mut self, tasks: Vec<TaskDescription>) -> Result<ExecutionReport, InteropError> {
        let id = self.submit(tasks)?;
        self.wait(id)
    }
}
