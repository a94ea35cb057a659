//! The per-pilot agent: owns the pilot's core slots and runs bound units.

use std::collections::BTreeMap;

use blockflow_core::FailureReason;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentEventKind {
    Executing,
    Done,
    Failed { reason: FailureReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub time: f64,
    pub unit_id: String,
    #[serde(flatten)]
    pub kind: AgentEventKind,
}

#[derive(Debug, Clone)]
struct Slot {
    cores: u32,
    end: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub pilot_id: String,
    pub cores: u32,
    pub active_at: f64,
    pub expires_at: f64,
    running: BTreeMap<String, Slot>,
    events: Vec<AgentEvent>,
}

impl Agent {
    pub fn new(pilot_id: impl Into<String>, cores: u32, active_at: f64, duration: f64) -> Self {
        Self {
            pilot_id: pilot_id.into(),
            cores,
            active_at,
            expires_at: active_at + duration,
            running: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn used_cores(&self) -> u32 {
        self.running.values().map(|s| s.cores).sum()
    }

    pub fn free_cores(&self) -> u32 {
        self.cores - self.used_cores()
    }

    pub fn remaining(&self, now: f64) -> f64 {
        (self.expires_at - now).max(0.0)
    }

    pub fn executing(&self) -> impl Iterator<Item = &str> {
        self.running.keys().map(String::as_str)
    }

    pub fn events(&self) -> &[AgentEvent] {
        &self.events
    }

    /// Starts a unit; the caller guarantees it fits.
    pub fn execute(&mut self, unit_id: &str, cores: u32, runtime: f64, now: f64) -> AgentEvent {
        assert!(cores <= self.free_cores(), "slot overflow on {}", self.pilot_id);
        self.running.insert(unit_id.to_string(), Slot { cores, end: now + runtime });
        self.push(now, unit_id, AgentEventKind::Executing)
    }

    pub fn next_completion(&self) -> Option<f64> {
        self.running.values().map(|s| s.end).reduce(f64::min)
    }

    /// Units whose runtime is over by `now`, ordered by end time then id.
    pub fn due_until(&self, now: f64) -> Vec<(String, f64)> {
        let mut due: Vec<(String, f64)> = self
            .running
            .iter()
            .filter(|(_, s)| s.end <= now)
            .map(|(id, s)| (id.clone(), s.end))
            .collect();
        due.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        due
    }

    pub fn finish(&mut self, unit_id: &str, now: f64, failure: Option<FailureReason>) -> AgentEvent {
        self.running.remove(unit_id);
        let kind = match failure {
            None => AgentEventKind::Done,
            Some(reason) => AgentEventKind::Failed { reason },
        };
        self.push(now, unit_id, kind)
    }

    /// Pilot gone: every unit still running fails with `reason`.
    pub fn terminate(&mut self, now: f64, reason: FailureReason) -> Vec<String> {
        let lost: Vec<String> = self.running.keys().cloned().collect();
        for id in &lost {
            self.finish(id, now, Some(reason.clone()));
        }
        lost
    }

    fn push(&mut self, time: f64, unit_id: &str, kind: AgentEventKind) -> AgentEvent {
        let ev = AgentEvent {
            time,
            unit_id: unit_id.to_string(),
            kind,
        };
        self.events.push(ev.clone());
        ev
    }
}
