//! Entity state machines.
//!
//! Three entity kinds share one state vocabulary but follow different
//! tables:
//!
//! ```text
//! Task/Unit: New -schedule-> Scheduled -submit-> Submitted -execute-> Executing -complete-> Done
//! Pilot:     New -enqueue-> Queued -activate-> Active -complete-> Done
//! Job:       New -enqueue-> Queued -run-> Running -complete-> Done
//! ```
//!
//! `fail` and `cancel` are accepted from every non-terminal state.
//! `Done`, `Failed` and `Canceled` are terminal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::StateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Task,
    Pilot,
    Job,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Task, EntityKind::Pilot, EntityKind::Job];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    New,
    Scheduled,
    Submitted,
    Queued,
    Executing,
    Active,
    Running,
    Done,
    Failed,
    Canceled,
}

impl State {
    pub const ALL: [State; 10] = [
        State::New,
        State::Scheduled,
        State::Submitted,
        State::Queued,
        State::Executing,
        State::Active,
        State::Running,
        State::Done,
        State::Failed,
        State::Canceled,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, State::Done | State::Failed | State::Canceled)
    }

    /// States an entity of `kind` can ever occupy.
    pub fn reachable(kind: EntityKind) -> &'static [State] {
        match kind {
            EntityKind::Task => &[
                State::New,
                State::Scheduled,
                State::Submitted,
                State::Executing,
                State::Done,
                State::Failed,
                State::Canceled,
            ],
            EntityKind::Pilot => &[
                State::New,
                State::Queued,
                State::Active,
                State::Done,
                State::Failed,
                State::Canceled,
            ],
            EntityKind::Job => &[
                State::New,
                State::Queued,
                State::Running,
                State::Done,
                State::Failed,
                State::Canceled,
            ],
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            State::New => "new",
            State::Scheduled => "scheduled",
            State::Submitted => "submitted",
            State::Queued => "queued",
            State::Executing => "executing",
            State::Active => "active",
            State::Running => "running",
            State::Done => "done",
            State::Failed => "failed",
            State::Canceled => "canceled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionEvent {
    Schedule,
    Submit,
    Enqueue,
    Execute,
    Activate,
    Run,
    Complete,
    Fail,
    Cancel,
}

impl TransitionEvent {
    pub const ALL: [TransitionEvent; 9] = [
        TransitionEvent::Schedule,
        TransitionEvent::Submit,
        TransitionEvent::Enqueue,
        TransitionEvent::Execute,
        TransitionEvent::Activate,
        TransitionEvent::Run,
        TransitionEvent::Complete,
        TransitionEvent::Fail,
        TransitionEvent::Cancel,
    ];
}

/// The transition table. `None` means the event is illegal in that state.
pub fn next_state(kind: EntityKind, from: State, event: TransitionEvent) -> Option<State> {
    use EntityKind as K;
    use State as S;
    use TransitionEvent as E;

    if from.is_terminal() || !State::reachable(kind).contains(&from) {
        return None;
    }
    match (kind, from, event) {
        (_, _, E::Fail) => Some(S::Failed),
        (_, _, E::Cancel) => Some(S::Canceled),

        (K::Task, S::New, E::Schedule) => Some(S::Scheduled),
        (K::Task, S::Scheduled, E::Submit) => Some(S::Submitted),
        (K::Task, S::Submitted, E::Execute) => Some(S::Executing),
        (K::Task, S::Executing, E::Complete) => Some(S::Done),

        (K::Pilot, S::New, E::Enqueue) => Some(S::Queued),
        (K::Pilot, S::Queued, E::Activate) => Some(S::Active),
        (K::Pilot, S::Active, E::Complete) => Some(S::Done),

        (K::Job, S::New, E::Enqueue) => Some(S::Queued),
        (K::Job, S::Queued, E::Run) => Some(S::Running),
        (K::Job, S::Running, E::Complete) => Some(S::Done),

        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub state: State,
    pub time: f64,
    pub actor: String,
}

/// Current state plus the full history that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityState {
    kind: EntityKind,
    current: State,
    history: Vec<StateRecord>,
}

impl EntityState {
    pub fn new(kind: EntityKind, time: f64, actor: impl Into<String>) -> Self {
        Self {
            kind,
            current: State::New,
            history: vec![StateRecord {
                state: State::New,
                time,
                actor: actor.into(),
            }],
        }
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn current(&self) -> State {
        self.current
    }

    pub fn history(&self) -> &[StateRecord] {
        &self.history
    }

    pub fn is_terminal(&self) -> bool {
        self.current.is_terminal()
    }

    /// Time the entity entered `state`, if it ever did.
    pub fn entered(&self, state: State) -> Option<f64> {
        self.history.iter().find(|r| r.state == state).map(|r| r.time)
    }

    pub fn last_time(&self) -> f64 {
        self.history.last().map(|r| r.time).unwrap_or(0.0)
    }

    /// Pure transition: returns the successor value, leaving `self` untouched.
    pub fn transition(&self, event: TransitionEvent, time: f64, actor: &str) -> Result<Self, StateError> {
        let mut next = self.clone();
        next.apply(event, time, actor)?;
        Ok(next)
    }

    /// In-place variant of [`EntityState::transition`].
    pub fn apply(&mut self, event: TransitionEvent, time: f64, actor: &str) -> Result<State, StateError> {
        let to = next_state(self.kind, self.current, event).ok_or(StateError::IllegalTransition {
            kind: self.kind,
            from: self.current,
            event,
        })?;
        let last = self.last_time();
        if time < last {
            return Err(StateError::TimeRegression { last, at: time });
        }
        self.current = to;
        self.history.push(StateRecord {
            state: to,
            time,
            actor: actor.to_string(),
        });
        Ok(to)
    }

    /// Rebuild a state value from a sequence of events.
    pub fn replay<'a, I>(kind: EntityKind, start: f64, events: I) -> Result<Self, StateError>
    where
        I: IntoIterator<Item = (TransitionEvent, f64, &'a str)>,
    {
        let mut state = EntityState::new(kind, start, "replay");
        for (event, time, actor) in events {
            state.apply(event, time, actor)?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_schedule_goes_to_scheduled() {
        let s = EntityState::new(EntityKind::Task, 0.0, "test");
        let s = s.transition(TransitionEvent::Schedule, 1.0, "test").unwrap();
        assert_eq!(s.current(), State::Scheduled);
        assert_eq!(s.history().len(), 2);
    }

    #[test]
    fn terminal_state_rejects_execute() {
        let mut s = EntityState::new(EntityKind::Task, 0.0, "t");
        for e in [
            TransitionEvent::Schedule,
            TransitionEvent::Submit,
            TransitionEvent::Execute,
            TransitionEvent::Complete,
        ] {
            s.apply(e, 1.0, "t").unwrap();
        }
        assert_eq!(s.current(), State::Done);
        let err = s.transition(TransitionEvent::Execute, 2.0, "t").unwrap_err();
        assert!(matches!(err, StateError::IllegalTransition { from: State::Done, .. }));
    }

    #[test]
    fn history_time_cannot_go_backwards() {
        let s = EntityState::new(EntityKind::Job, 5.0, "t");
        assert!(matches!(
            s.transition(TransitionEvent::Enqueue, 4.0, "t"),
            Err(StateError::TimeRegression { .. })
        ));
    }

    #[test]
    fn cancel_from_every_non_terminal_state() {
        for kind in EntityKind::ALL {
            for &st in State::reachable(kind) {
                let got = next_state(kind, st, TransitionEvent::Cancel);
                if st.is_terminal() {
                    assert_eq!(got, None);
                } else {
                    assert_eq!(got, Some(State::Canceled));
                }
            }
        }
    }
}
