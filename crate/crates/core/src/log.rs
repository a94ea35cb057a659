//! Append-only, time-ordered event log and the simulation clock.
//!
//! Every building block records its observable state changes here. The log
//! is serialized as one JSON object per line; with `BTreeMap`-backed JSON
//! objects the byte stream is a pure function of the appended events.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::LogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JobQueued,
    JobReserved,
    JobStarted,
    JobDone,
    JobFailed,
    JobCanceled,

    PilotNew,
    PilotQueued,
    PilotActive,
    PilotDone,
    PilotFailed,
    PilotCanceled,

    UnitNew,
    UnitScheduled,
    UnitSubmitted,
    UnitExecuting,
    UnitDone,
    UnitFailed,
    UnitCanceled,

    TaskIngested,
    TaskResubmitted,
    TaskDone,
    TaskFailed,
    TaskCanceled,

    CapacityReport,
    FaultInjected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub entity: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
}

impl Event {
    pub fn new(time: f64, entity: impl Into<String>, kind: EventKind, payload: Value) -> Self {
        Self {
            time,
            entity: entity.into(),
            kind,
            payload,
        }
    }

    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    pub fn f64_field(&self, key: &str) -> Option<f64> {
        self.payload.get(key).and_then(Value::as_f64)
    }

    pub fn u64_field(&self, key: &str) -> Option<u64> {
        self.payload.get(key).and_then(Value::as_u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, event: Event) -> Result<(), LogError> {
        if let Some(last) = self.events.last() {
            if event.time < last.time {
                return Err(LogError::TimeRegression {
                    last: last.time,
                    at: event.time,
                });
            }
        }
        self.events.push(event);
        Ok(())
    }

    /// Appends, panicking on time regression. Components that own the clock
    /// use this; a regression there is a bug, not an input error.
    pub fn record(&mut self, time: f64, entity: impl Into<String>, kind: EventKind, payload: Value) {
        self.append(Event::new(time, entity, kind, payload))
            .expect("event log time regression");
    }

    pub fn extend<I: IntoIterator<Item = Event>>(&mut self, events: I) -> Result<(), LogError> {
        for e in events {
            self.append(e)?;
        }
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn for_entity<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.entity == entity)
    }

    /// Removes and returns every event appended so far.
    pub fn drain(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut log = EventLog::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = serde_json::from_str(line).map_err(|e| LogError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            log.append(event)?;
        }
        Ok(log)
    }
}

/// Monotone simulated time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn new(start: f64) -> Self {
        Self { now: start }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance_to(&mut self, t: f64) -> Result<(), LogError> {
        if t < self.now {
            return Err(LogError::TimeRegression { last: self.now, at: t });
        }
        self.now = t;
        Ok(())
    }
}
