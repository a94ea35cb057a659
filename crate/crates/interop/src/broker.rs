//! Broker protocol: a remote workflow manager submits tasks through a queue
//! and the executor side answers with state updates and capacity reports.
//!
//! Messages carry tasks and aggregate resource figures only. The broker
//! never learns about dependencies or individual pilots.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use blockflow_core::{
    derive_workload, Connectivity, EventKind, ExecutionReport, FailureReason, PilotDescription, State, TaskDescription,
    TaskTiming, WorkflowDag,
};
use blockflow_pilot::{AggregatedCapacity, ComputeUnit, PilotSession};
use log::debug;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::InteropError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BrokerMessage {
    TaskSubmit {
        task: TaskDescription,
    },
    CapacityReport {
        time: f64,
        pilots: usize,
        total_cores: u64,
        free_cores: u64,
        remaining_seconds: f64,
    },
    StateUpdate {
        task_id: String,
        state: State,
        time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        started: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<FailureReason>,
    },
}

impl BrokerMessage {
    pub fn capacity(c: &AggregatedCapacity) -> Self {
        Self::CapacityReport {
            time: c.time,
            pilots: c.pilots.len(),
            total_cores: c.total_cores,
            free_cores: c.free_cores,
            remaining_seconds: c.remaining_seconds,
        }
    }
}

#[derive(Debug, Default)]
struct Inner {
    messages: VecDeque<BrokerMessage>,
    closed: bool,
    journal: Option<File>,
}

/// FIFO message queue shared between one producer and one consumer.
///
/// A persistent queue appends every pushed message to a journal file, one
/// JSON object per line, before it becomes visible to the consumer.
#[derive(Debug, Clone, Default)]
pub struct BrokerQueue {
    inner: Arc<Mutex<Inner>>,
}

impl BrokerQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn persistent(journal: impl AsRef<Path>) -> Result<Self, InteropError> {
        let file = OpenOptions::new().create(true).append(true).open(journal)?;
        let q = Self::new();
        q.lock().journal = Some(file);
        Ok(q)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn push(&self, msg: BrokerMessage) -> Result<(), InteropError> {
        let mut inner = self.lock();
        if inner.closed {
            return Err(InteropError::QueueClosed);
        }
        if let Some(file) = inner.journal.as_mut() {
            let mut line = serde_json::to_string(&msg)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        inner.messages.push_back(msg);
        Ok(())
    }

    /// Takes every queued message in order. A closed queue still hands out
    /// what was pushed before closing, and fails once it is empty.
    pub fn poll(&self) -> Result<Vec<BrokerMessage>, InteropError> {
        let mut inner = self.lock();
        if inner.closed && inner.messages.is_empty() {
            return Err(InteropError::QueueClosed);
        }
        Ok(inner.messages.drain(..).collect())
    }

    pub fn len(&self) -> usize {
        self.lock().messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn close(&self) {
        self.lock().closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }
}

/// Reads a queue journal back.
pub fn read_journal(path: impl AsRef<Path>) -> Result<Vec<BrokerMessage>, InteropError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| InteropError::ParseError {
                line: n + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Executor side of the protocol. Looks to the broker like a resource
/// queue: tasks go in, state updates and aggregate capacity come out.
pub struct NgeExecutor {
    session: PilotSession,
    pilots: Vec<String>,
    last_capacity: Option<(u64, u64)>,
}

impl NgeExecutor {
    /// Takes over `session` and submits `pilots` on it. Resources without
    /// WAN connectivity cannot talk to a broker and are refused.
    pub fn new(mut session: PilotSession, pilots: Vec<PilotDescription>) -> Result<Self, InteropError> {
        for id in session.resource_ids() {
            let connector = session.connector(&id).expect("listed resource");
            if connector.connectivity() == Connectivity::None {
                return Err(InteropError::NoConnectivity(id));
            }
        }
        let pilots = pilots
            .into_iter()
            .map(|pd| session.submit_pilot(pd))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            session,
            pilots,
            last_capacity: None,
        })
    }

    pub fn session(&self) -> &PilotSession {
        &self.session
    }

    pub fn into_session(self) -> PilotSession {
        self.session
    }

    /// One round: take submissions from `inbox`, process the next instant
    /// of the pilot runtime if there is work, and answer on `outbox`.
    /// Returns whether anything happened.
    pub fn serve(&mut self, inbox: &BrokerQueue, outbox: &BrokerQueue) -> Result<bool, InteropError> {
        let incoming = match inbox.poll() {
            Ok(m) => m,
            Err(InteropError::QueueClosed) => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut progressed = !incoming.is_empty();
        let units: Vec<ComputeUnit> = incoming
            .into_iter()
            .filter_map(|m| match m {
                BrokerMessage::TaskSubmit { task } => Some(ComputeUnit::from_task(task)),
                other => {
                    debug!("executor ignores {other:?}");
                    None
                }
            })
            .collect();
        if !units.is_empty() {
            self.session.submit_units(units)?;
        }
        if self.session.unfinished_units() == 0 {
            return Ok(progressed);
        }
        let Some(step) = self.session.step() else {
            return Ok(progressed);
        };
        progressed = true;
        for uid in &step.finished_units {
            let unit = self.session.unit(uid).expect("finished unit");
            outbox.push(BrokerMessage::StateUpdate {
                task_id: unit.task.task_id.clone(),
                state: unit.current(),
                time: step.time,
                started: unit.start,
                reason: unit.reason.clone(),
            })?;
        }
        for (uid, _) in &step.bound {
            let unit = self.session.unit(uid).expect("bound unit");
            outbox.push(BrokerMessage::StateUpdate {
                task_id: unit.task.task_id.clone(),
                state: State::Executing,
                time: step.time,
                started: unit.start,
                reason: None,
            })?;
        }
        self.report_capacity(outbox)?;
        Ok(progressed)
    }

    /// Sends a capacity report when the aggregate has changed since the
    /// last one, and records the same figures in the event log.
    fn report_capacity(&mut self, outbox: &BrokerQueue) -> Result<(), InteropError> {
        let cap = self.session.expose_capacity(&self.pilots);
        let key = (cap.total_cores, cap.free_cores);
        if self.last_capacity == Some(key) {
            return Ok(());
        }
        self.last_capacity = Some(key);
        self.session.record(
            "broker",
            EventKind::CapacityReport,
            json!({
                "pilots": cap.pilots.len(),
                "total_cores": cap.total_cores,
                "free_cores": cap.free_cores,
                "remaining_seconds": cap.remaining_seconds,
            }),
        );
        outbox.push(BrokerMessage::capacity(&cap))
    }
}

/// Workflow-manager side: owns the dependency graph and submits tasks as
/// they become ready.
#[derive(Debug)]
pub struct BrokerClient {
    dag: WorkflowDag,
    now: f64,
    completed: BTreeSet<String>,
    submitted: BTreeMap<String, f64>,
    results: BTreeMap<String, (State, Option<f64>, f64, Option<FailureReason>)>,
    capacity: Vec<BrokerMessage>,
}

impl BrokerClient {
    pub fn new(dag: WorkflowDag) -> Self {
        Self {
            dag,
            now: 0.0,
            completed: BTreeSet::new(),
            submitted: BTreeMap::new(),
            results: BTreeMap::new(),
            capacity: Vec::new(),
        }
    }

    /// Reads updates from `inbox` and pushes newly ready tasks to `outbox`.
    pub fn pump(&mut self, inbox: &BrokerQueue, outbox: &BrokerQueue) -> Result<usize, InteropError> {
        for msg in inbox.poll()? {
            match msg {
                BrokerMessage::StateUpdate {
                    task_id,
                    state,
                    time,
                    started,
                    reason,
                } => {
                    self.now = self.now.max(time);
                    if state.is_terminal() {
                        if state == State::Done {
                            self.completed.insert(task_id.clone());
                        }
                        self.results.insert(task_id, (state, started, time, reason));
                    }
                }
                BrokerMessage::CapacityReport { time, .. } => {
                    self.now = self.now.max(time);
                    self.capacity.push(msg);
                }
                BrokerMessage::TaskSubmit { .. } => {}
            }
        }
        let busy: BTreeSet<String> = self.submitted.keys().filter(|t| !self.completed.contains(*t)).cloned().collect();
        let ready = derive_workload(&self.dag, &self.completed, &busy, self.now)?;
        let n = ready.len();
        for task in ready.tasks {
            self.submitted.insert(task.task_id.clone(), self.now);
            outbox.push(BrokerMessage::TaskSubmit { task })?;
        }
        Ok(n)
    }

    /// Every submitted task has a terminal answer and nothing else can
    /// become ready.
    pub fn finished(&self) -> bool {
        self.results.len() == self.submitted.len()
    }

    pub fn capacity_reports(&self) -> &[BrokerMessage] {
        &self.capacity
    }

    pub fn report(&self) -> ExecutionReport {
        let timings = self
            .dag
            .tasks
            .keys()
            .map(|id| {
                let result = self.results.get(id);
                TaskTiming {
                    task_id: id.clone(),
                    submitted: self.submitted.get(id).copied(),
                    start: result.and_then(|r| r.1),
                    end: result.map(|r| r.2),
                    state: result.map_or(State::Canceled, |r| r.0),
                    attempts: u32::from(self.submitted.contains_key(id)),
                    resource: None,
                    reason: result.and_then(|r| r.3.clone()),
                }
            })
            .collect();
        ExecutionReport::from_timings(timings, 0, Vec::new())
    }
}

/// Drives client and executor in lockstep until the workflow is finished
/// or stuck.
pub fn run_broker(dag: WorkflowDag, executor: &mut NgeExecutor) -> Result<ExecutionReport, InteropError> {
    run_broker_over(dag, executor, &BrokerQueue::new(), &BrokerQueue::new())
}

/// Like [`run_broker`] over caller-provided queues, e.g. persistent ones.
pub fn run_broker_over(
    dag: WorkflowDag,
    executor: &mut NgeExecutor,
    submissions: &BrokerQueue,
    updates: &BrokerQueue,
) -> Result<ExecutionReport, InteropError> {
    let mut client = BrokerClient::new(dag);
    loop {
        let pushed = client.pump(updates, submissions)?;
        if client.finished() && pushed == 0 {
            break;
        }
        if !executor.serve(submissions, updates)? && updates.is_empty() {
            break;
        }
    }
    submissions.close();
    Ok(client.report())
}
