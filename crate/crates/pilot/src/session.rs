//! Pilot manager, unit manager and agents driven by one discrete-event loop.
//!
//! Each step moves every connector and agent to the next instant anything
//! happens, then processes, in order: unit completions, injected faults,
//! placeholder updates from the resources, and finally a binding round in
//! which pending units are placed on active pilots. All entity changes go
//! through the session's event log.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use blockflow_core::{
    EntityKind, EntityState, Event, EventKind, EventLog, FailureReason, PilotDescription, ResourceConnector,
    ResourceError, State, TransitionEvent,
};
use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agent::{Agent, AgentEvent};
use crate::capacity::{AggregatedCapacity, PilotCapacity};
use crate::scheduler::{PilotSlot, RoundRobinScheduler, UnitRequest, UnitScheduler};
use crate::unit::ComputeUnit;

const PROJECT: &str = "blockflow";
const PILOT_ACTOR: &str = "pilot-manager";
const UNIT_ACTOR: &str = "unit-manager";

#[derive(Debug, Error)]
pub enum PilotError {
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error("no connector for resource `{0}`")]
    UnknownResource(String),
    #[error("resource `{0}` is already attached")]
    DuplicateResource(String),
    #[error("duplicate unit id `{0}`")]
    DuplicateUnitId(String),
    #[error("invalid unit `{id}`: {reason}")]
    InvalidUnit { id: String, reason: String },
    #[error("unknown pilot `{0}`")]
    UnknownPilot(String),
    #[error("pilot `{0}` has already ended")]
    PilotEnded(String),
}

#[derive(Debug, Clone)]
pub struct Pilot {
    pub pilot_id: String,
    pub desc: PilotDescription,
    pub state: EntityState,
    pub job_id: String,
    pub reason: Option<FailureReason>,
}

impl Pilot {
    pub fn current(&self) -> State {
        self.state.current()
    }

    pub fn active_at(&self) -> Option<f64> {
        self.state.entered(State::Active)
    }

    pub fn ended_at(&self) -> Option<f64> {
        self.current().is_terminal().then(|| self.state.last_time())
    }
}

/// Seeded multiplicative noise on unit runtimes: each unit runs for its
/// estimate times a factor drawn uniformly from `[1 - spread, 1 + spread]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub spread: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Terminate the named pilot.
    KillPilot,
    /// Make the next completion of the named task a failure.
    FailTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub time: f64,
    pub target: String,
    pub kind: FaultKind,
}

/// What changed during one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub time: f64,
    /// Units that reached a terminal state, in the order they did.
    pub finished_units: Vec<String>,
    /// Pilots that reached a terminal state.
    pub ended_pilots: Vec<String>,
    pub bound: Vec<(String, String)>,
}

pub struct PilotSession {
    now: f64,
    connectors: BTreeMap<String, Box<dyn ResourceConnector>>,
    pilots: BTreeMap<String, Pilot>,
    by_job: HashMap<(String, String), String>,
    agents: BTreeMap<String, Agent>,
    units: BTreeMap<String, ComputeUnit>,
    pending: VecDeque<String>,
    scheduler: Box<dyn UnitScheduler>,
    noise: Option<(f64, ChaCha8Rng)>,
    faults: Vec<Fault>,
    fault_cursor: usize,
    armed: BTreeSet<String>,
    /// New units or pilots arrived since the last binding round.
    dirty: bool,
    log: EventLog,
}

impl Default for PilotSession {
    fn default() -> Self {
        Self::new()
    }
}

impl PilotSession {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            connectors: BTreeMap::new(),
            pilots: BTreeMap::new(),
            by_job: HashMap::new(),
            agents: BTreeMap::new(),
            units: BTreeMap::new(),
            pending: VecDeque::new(),
            scheduler: Box::new(RoundRobinScheduler),
            noise: None,
            faults: Vec::new(),
            fault_cursor: 0,
            armed: BTreeSet::new(),
            dirty: false,
            log: EventLog::new(),
        }
    }

    pub fn with_scheduler(mut self, scheduler: Box<dyn UnitScheduler>) -> Self {
        self.scheduler = scheduler;
        self
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.noise = (p.spread > 0.0).then(|| (p.spread.min(0.99), ChaCha8Rng::seed_from_u64(p.seed)));
        self
    }

    pub fn with_faults(mut self, mut faults: Vec<Fault>) -> Self {
        faults.sort_by(|a, b| a.time.total_cmp(&b.time));
        self.faults = faults;
        self.fault_cursor = 0;
        self
    }

    pub fn add_connector(&mut self, mut connector: Box<dyn ResourceConnector>) -> Result<(), PilotError> {
        let id = connector.resource_id().to_string();
        if self.connectors.contains_key(&id) {
            return Err(PilotError::DuplicateResource(id));
        }
        // bring the newcomer to session time
        let _ = connector.advance(self.now);
        let events = connector.drain_events();
        self.forward(events);
        self.connectors.insert(id, connector);
        Ok(())
    }

    pub fn connector(&self, resource_id: &str) -> Option<&dyn ResourceConnector> {
        self.connectors.get(resource_id).map(|c| c.as_ref())
    }

    pub fn resource_ids(&self) -> Vec<String> {
        self.connectors.keys().cloned().collect()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn pilot(&self, pilot_id: &str) -> Option<&Pilot> {
        self.pilots.get(pilot_id)
    }

    pub fn pilots(&self) -> impl Iterator<Item = &Pilot> {
        self.pilots.values()
    }

    /// Pilots not yet in a terminal state.
    pub fn live_pilots(&self) -> impl Iterator<Item = &Pilot> {
        self.pilots.values().filter(|p| !p.current().is_terminal())
    }

    pub fn unit(&self, unit_id: &str) -> Option<&ComputeUnit> {
        self.units.get(unit_id)
    }

    pub fn units(&self) -> impl Iterator<Item = &ComputeUnit> {
        self.units.values()
    }

    /// Units not yet bound to a pilot, in arrival order.
    pub fn pending(&self) -> impl Iterator<Item = &str> {
        self.pending.iter().map(String::as_str)
    }

    pub fn unfinished_units(&self) -> usize {
        self.units.values().filter(|u| !u.is_terminal()).count()
    }

    /// The event stream of a pilot's agent (empty before it is active).
    pub fn agent_events(&self, pilot_id: &str) -> &[AgentEvent] {
        self.agents.get(pilot_id).map(|a| a.events()).unwrap_or(&[])
    }

    pub fn submit_pilot(&mut self, pd: PilotDescription) -> Result<String, PilotError> {
        let connector = self
            .connectors
            .get_mut(&pd.target_resource)
            .ok_or_else(|| PilotError::UnknownResource(pd.target_resource.clone()))?;
        let job_id = connector.submit(pd.to_job_description(PROJECT))?;
        let pilot_id = format!("pilot.{:04}", self.pilots.len());
        let mut state = EntityState::new(EntityKind::Pilot, self.now, PILOT_ACTOR);
        self.log.record(
            self.now,
            &pilot_id,
            EventKind::PilotNew,
            json!({
                "cores": pd.cores,
                "duration": pd.duration,
                "resource": pd.target_resource,
                "queue": pd.queue_name,
            }),
        );
        state.apply(TransitionEvent::Enqueue, self.now, PILOT_ACTOR).expect("new pilot can queue");
        let job_events = connector.drain_events();
        self.forward(job_events);
        self.log.record(
            self.now,
            &pilot_id,
            EventKind::PilotQueued,
            json!({ "job": job_id, "resource": pd.target_resource }),
        );
        self.by_job.insert((pd.target_resource.clone(), job_id.clone()), pilot_id.clone());
        self.pilots.insert(
            pilot_id.clone(),
            Pilot {
                pilot_id: pilot_id.clone(),
                desc: pd,
                state,
                job_id,
                reason: None,
            },
        );
        // a free resource may have started the job already
        let mut report = StepReport {
            time: self.now,
            ..Default::default()
        };
        self.collect_updates(self.now, &mut report);
        self.dirty = true;
        Ok(pilot_id)
    }

    pub fn cancel_pilot(&mut self, pilot_id: &str) -> Result<(), PilotError> {
        let mut report = StepReport::default();
        self.kill_pilot(pilot_id, TransitionEvent::Cancel, None, &mut report)
    }

    pub fn submit_units(&mut self, units: Vec<ComputeUnit>) -> Result<Vec<String>, PilotError> {
        let mut seen = BTreeSet::new();
        for u in &units {
            if self.units.contains_key(&u.unit_id) || !seen.insert(u.unit_id.as_str()) {
                return Err(PilotError::DuplicateUnitId(u.unit_id.clone()));
            }
            u.task.validate().map_err(|e| PilotError::InvalidUnit {
                id: u.unit_id.clone(),
                reason: e.to_string(),
            })?;
        }
        let mut ids = Vec::with_capacity(units.len());
        for mut u in units {
            u.state = EntityState::new(EntityKind::Task, self.now, UNIT_ACTOR);
            u.bound_pilot = None;
            u.start = None;
            u.end = None;
            u.reason = None;
            self.log.record(
                self.now,
                &u.unit_id,
                EventKind::UnitNew,
                json!({ "task": u.task.task_id, "cores": u.task.cores }),
            );
            ids.push(u.unit_id.clone());
            self.pending.push_back(u.unit_id.clone());
            self.units.insert(u.unit_id.clone(), u);
        }
        self.dirty |= !ids.is_empty();
        Ok(ids)
    }

    /// Cancels units that have not been bound yet; bound or finished units
    /// are left alone. Returns the ids actually canceled.
    pub fn cancel_pending(&mut self, unit_ids: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        for id in unit_ids {
            if !self.pending.contains(id) {
                continue;
            }
            self.pending.retain(|p| p != id);
            let unit = self.units.get_mut(id).expect("pending unit exists");
            unit.state
                .apply(TransitionEvent::Cancel, self.now, UNIT_ACTOR)
                .expect("pending unit can cancel");
            unit.end = Some(self.now);
            self.log.record(self.now, id, EventKind::UnitCanceled, serde_json::Value::Null);
            out.push(id.clone());
        }
        out
    }

    /// Appends a caller event at the current time.
    pub fn record(&mut self, entity: &str, kind: EventKind, payload: serde_json::Value) {
        self.log.record(self.now, entity, kind, payload);
    }

    /// One binding round at the current time.
    pub fn schedule(&mut self) -> Vec<(String, String)> {
        let mut report = StepReport {
            time: self.now,
            ..Default::default()
        };
        self.bind_round(&mut report);
        self.dirty = false;
        report.bound
    }

    pub fn expose_capacity(&self, pilot_ids: &[String]) -> AggregatedCapacity {
        let pilots = pilot_ids
            .iter()
            .filter_map(|id| self.agents.get(id))
            .filter(|a| self.pilots[&a.pilot_id].current() == State::Active)
            .map(|a| PilotCapacity {
                pilot_id: a.pilot_id.clone(),
                cores: a.cores,
                free_cores: a.free_cores(),
                remaining_seconds: a.remaining(self.now),
            })
            .collect();
        AggregatedCapacity::from_pilots(self.now, pilots)
    }

    /// Capacity of every active pilot.
    pub fn capacity(&self) -> AggregatedCapacity {
        let ids: Vec<String> = self.agents.keys().cloned().collect();
        self.expose_capacity(&ids)
    }

    pub fn next_event_time(&self) -> Option<f64> {
        if self.dirty {
            return Some(self.now);
        }
        let units = self.agents.values().filter_map(Agent::next_completion);
        let resources = self.connectors.values().filter_map(|c| c.next_event_time());
        let fault = self.faults.get(self.fault_cursor).map(|f| f.time);
        units
            .chain(resources)
            .chain(fault)
            .reduce(f64::min)
            .map(|t| t.max(self.now))
    }

    /// Process the next instant at which something happens.
    pub fn step(&mut self) -> Option<StepReport> {
        self.step_until(f64::INFINITY)
    }

    /// Like [`step`](Self::step) but does nothing if the next event is
    /// later than `limit`.
    pub fn step_until(&mut self, limit: f64) -> Option<StepReport> {
        let t = self.next_event_time()?;
        if t > limit {
            return None;
        }
        Some(self.process(t))
    }

    /// Process every event up to and including `t`, then move the clock to `t`.
    pub fn advance_to(&mut self, t: f64) -> Vec<StepReport> {
        let mut reports = Vec::new();
        while let Some(r) = self.step_until(t) {
            reports.push(r);
        }
        if t > self.now {
            reports.push(self.process(t));
        }
        reports
    }

    /// Step until no unit is left unfinished or nothing more can happen.
    pub fn run_to_completion(&mut self) -> Vec<StepReport> {
        let mut reports = Vec::new();
        while self.unfinished_units() > 0 {
            match self.step() {
                Some(r) => reports.push(r),
                None => break,
            }
        }
        reports
    }

    fn process(&mut self, t: f64) -> StepReport {
        self.now = t;
        let mut report = StepReport {
            time: t,
            ..Default::default()
        };
        self.complete_units(t, &mut report);
        self.fire_faults(t, &mut report);
        self.collect_updates(t, &mut report);
        self.bind_round(&mut report);
        self.dirty = false;
        report
    }

    fn complete_units(&mut self, t: f64, report: &mut StepReport) {
        let pilots: Vec<String> = self.agents.keys().cloned().collect();
        for pid in pilots {
            let due = self.agents[&pid].due_until(t);
            for (uid, end) in due {
                let task = self.units[&uid].task.task_id.clone();
                let failure = self.armed.remove(&task).then_some(FailureReason::Injected);
                self.agents.get_mut(&pid).expect("agent").finish(&uid, end, failure.clone());
                self.finish_unit(&uid, end, failure, report);
            }
        }
    }

    fn fire_faults(&mut self, t: f64, report: &mut StepReport) {
        while let Some(f) = self.faults.get(self.fault_cursor).cloned() {
            if f.time > t {
                break;
            }
            self.fault_cursor += 1;
            self.log.record(
                t,
                &f.target,
                EventKind::FaultInjected,
                json!({ "kind": f.kind }),
            );
            match f.kind {
                FaultKind::KillPilot => {
                    if let Err(e) = self.kill_pilot(&f.target, TransitionEvent::Fail, Some(FailureReason::Injected), report) {
                        debug!("fault on {} ignored: {e}", f.target);
                    }
                }
                FaultKind::FailTask => {
                    self.armed.insert(f.target);
                }
            }
        }
    }

    fn kill_pilot(
        &mut self,
        pilot_id: &str,
        event: TransitionEvent,
        reason: Option<FailureReason>,
        report: &mut StepReport,
    ) -> Result<(), PilotError> {
        let pilot = self
            .pilots
            .get(pilot_id)
            .ok_or_else(|| PilotError::UnknownPilot(pilot_id.to_string()))?;
        if pilot.current().is_terminal() {
            return Err(PilotError::PilotEnded(pilot_id.to_string()));
        }
        let resource = pilot.desc.target_resource.clone();
        let job_id = pilot.job_id.clone();
        let connector = self.connectors.get_mut(&resource).expect("pilot resource attached");
        if let Err(e) = connector.cancel(&job_id) {
            debug!("cancel of {job_id} on {resource}: {e}");
        }
        let events = connector.drain_events();
        self.forward(events);
        // drop the cancellation echo
        let updates = self.connectors.get_mut(&resource).expect("attached").advance(self.now);
        let events = self.connectors.get_mut(&resource).expect("attached").drain_events();
        self.forward(events);
        self.end_pilot(pilot_id, self.now, event, reason, FailureReason::PilotKilled, report);
        self.apply_updates(&resource, updates, report);
        Ok(())
    }

    fn collect_updates(&mut self, t: f64, report: &mut StepReport) {
        let ids: Vec<String> = self.connectors.keys().cloned().collect();
        for rid in ids {
            let connector = self.connectors.get_mut(&rid).expect("connector");
            let updates = connector.advance(t);
            let events = connector.drain_events();
            self.forward(events);
            self.apply_updates(&rid, updates, report);
        }
    }

    fn apply_updates(&mut self, rid: &str, updates: Vec<blockflow_core::PlaceholderUpdate>, report: &mut StepReport) {
        for u in updates {
            let Some(pid) = self.by_job.get(&(rid.to_string(), u.job_id.clone())).cloned() else {
                continue;
            };
            if self.pilots[&pid].current().is_terminal() {
                continue;
            }
            match u.state {
                State::Running => {
                    let pilot = self.pilots.get_mut(&pid).expect("pilot");
                    pilot
                        .state
                        .apply(TransitionEvent::Activate, u.time, PILOT_ACTOR)
                        .expect("queued pilot activates");
                    let agent = Agent::new(&pid, pilot.desc.cores, u.time, pilot.desc.duration);
                    self.log.record(
                        u.time,
                        &pid,
                        EventKind::PilotActive,
                        json!({ "cores": pilot.desc.cores, "expires": agent.expires_at, "resource": rid }),
                    );
                    self.agents.insert(pid, agent);
                }
                State::Done => {
                    self.end_pilot(&pid, u.time, TransitionEvent::Complete, None, FailureReason::PilotExpired, report)
                }
                State::Failed => {
                    let lost = if u.reason == Some(FailureReason::Walltime) {
                        FailureReason::PilotExpired
                    } else {
                        FailureReason::PilotKilled
                    };
                    self.end_pilot(&pid, u.time, TransitionEvent::Fail, u.reason, lost, report)
                }
                State::Canceled => {
                    self.end_pilot(&pid, u.time, TransitionEvent::Cancel, None, FailureReason::PilotKilled, report)
                }
                _ => {}
            }
        }
    }

    fn end_pilot(
        &mut self,
        pid: &str,
        t: f64,
        event: TransitionEvent,
        reason: Option<FailureReason>,
        unit_reason: FailureReason,
        report: &mut StepReport,
    ) {
        if let Some(agent) = self.agents.get_mut(pid) {
            let lost = agent.terminate(t, unit_reason.clone());
            for uid in lost {
                self.finish_unit(&uid, t, Some(unit_reason.clone()), report);
            }
        }
        let pilot = self.pilots.get_mut(pid).expect("pilot");
        let to = pilot.state.apply(event, t, PILOT_ACTOR).expect("live pilot can end");
        pilot.reason = reason.clone();
        let (kind, payload) = match to {
            State::Done => (EventKind::PilotDone, serde_json::Value::Null),
            State::Failed => (EventKind::PilotFailed, json!({ "reason": reason })),
            _ => (EventKind::PilotCanceled, serde_json::Value::Null),
        };
        self.log.record(t, pid, kind, payload);
        report.ended_pilots.push(pid.to_string());
    }

    fn finish_unit(&mut self, uid: &str, t: f64, failure: Option<FailureReason>, report: &mut StepReport) {
        let unit = self.units.get_mut(uid).expect("unit");
        let event = if failure.is_some() {
            TransitionEvent::Fail
        } else {
            TransitionEvent::Complete
        };
        unit.state.apply(event, t, UNIT_ACTOR).expect("unit can finish");
        unit.end = Some(t);
        unit.reason = failure.clone();
        match failure {
            None => self.log.record(t, uid, EventKind::UnitDone, serde_json::Value::Null),
            Some(reason) => self.log.record(t, uid, EventKind::UnitFailed, json!({ "reason": reason })),
        }
        report.finished_units.push(uid.to_string());
    }

    /// Units no live pilot could ever host fail; the rest are offered to
    /// the scheduler.
    fn bind_round(&mut self, report: &mut StepReport) {
        let t = self.now;
        let live: Vec<(u32, f64)> = self
            .live_pilots()
            .map(|p| (p.desc.cores, p.desc.duration))
            .collect();
        if !live.is_empty() {
            let hopeless: Vec<String> = self
                .pending
                .iter()
                .filter(|id| {
                    let task = &self.units[id.as_str()].task;
                    !live.iter().any(|&(c, d)| c >= task.cores && d >= task.runtime_estimate)
                })
                .cloned()
                .collect();
            for uid in hopeless {
                self.pending.retain(|p| p != &uid);
                self.finish_unit(&uid, t, Some(FailureReason::Unschedulable), report);
            }
        }

        let slots: Vec<PilotSlot> = self
            .agents
            .values()
            .filter(|a| self.pilots[&a.pilot_id].current() == State::Active)
            .map(|a| PilotSlot {
                pilot_id: a.pilot_id.clone(),
                free_cores: a.free_cores(),
                remaining_seconds: a.remaining(t),
            })
            .collect();
        if slots.is_empty() || self.pending.is_empty() {
            return;
        }
        let requests: Vec<UnitRequest> = self
            .pending
            .iter()
            .map(|id| {
                let task = &self.units[id].task;
                UnitRequest {
                    unit_id: id.clone(),
                    cores: task.cores,
                    runtime_estimate: task.runtime_estimate,
                }
            })
            .collect();
        let assignments = self.scheduler.bind(&requests, &slots);
        for (uid, pid) in &assignments {
            self.pending.retain(|p| p != uid);
            let runtime = self.runtime_of(uid);
            let unit = self.units.get_mut(uid).expect("unit");
            for ev in [TransitionEvent::Schedule, TransitionEvent::Submit, TransitionEvent::Execute] {
                unit.state.apply(ev, t, UNIT_ACTOR).expect("pending unit binds");
            }
            unit.bound_pilot = Some(pid.clone());
            unit.start = Some(t);
            let cores = unit.task.cores;
            self.log.record(t, uid, EventKind::UnitScheduled, json!({ "pilot": pid }));
            self.log.record(t, uid, EventKind::UnitSubmitted, json!({ "pilot": pid }));
            self.agents.get_mut(pid).expect("agent").execute(uid, cores, runtime, t);
            self.log
                .record(t, uid, EventKind::UnitExecuting, json!({ "pilot": pid, "cores": cores }));
        }
        report.bound.extend(assignments);
    }

    fn runtime_of(&mut self, uid: &str) -> f64 {
        let estimate = self.units[uid].task.runtime_estimate;
        match &mut self.noise {
            Some((spread, rng)) => estimate * rng.gen_range(1.0 - *spread..=1.0 + *spread),
            None => estimate,
        }
    }

    fn forward(&mut self, events: Vec<Event>) {
        for e in events {
            let e = Event { time: e.time.max(self.log.last_time().unwrap_or(e.time)), ..e };
            self.log.append(e).expect("clamped event time");
        }
    }
}
