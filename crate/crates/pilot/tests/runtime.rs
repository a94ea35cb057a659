//! Pilot runtime on its own: dedicated connectors and units from plain lists.

use std::collections::{BTreeMap, BTreeSet};

use blockflow_core::{EventKind, EventLog, FailureReason, PilotDescription, ResourceError, State, TaskDescription};
use blockflow_pilot::{
    AgentEventKind, ComputeUnit, DedicatedConnector, Fault, FaultKind, Perturbation, PilotError, PilotSession,
};
use proptest::prelude::*;

fn session(machines: &[(&str, u32)]) -> PilotSession {
    let mut s = PilotSession::new();
    for &(id, cores) in machines {
        s.add_connector(Box::new(DedicatedConnector::new(id, cores, 86400.0))).unwrap();
    }
    s
}

fn units(prefix: &str, n: usize, cores: u32, runtime: f64) -> Vec<ComputeUnit> {
    (0..n)
        .map(|i| {
            let t = TaskDescription::new(format!("{prefix}{i:03}"), "/bin/true", runtime);
            ComputeUnit::from_task(if cores > 1 { t.mpi(cores) } else { t })
        })
        .collect()
}

fn pd(resource: &str, cores: u32, duration: f64) -> PilotDescription {
    PilotDescription::new(cores, duration, resource, "batch")
}

/// Per-unit `(pilot, start, end, outcome)` replayed from the log alone.
#[derive(Debug, Default, Clone)]
struct Replay {
    active: BTreeMap<String, f64>,
    ended: BTreeMap<String, f64>,
    pilot_cores: BTreeMap<String, u32>,
    bound: BTreeMap<String, (String, f64)>,
    exec: BTreeMap<String, (String, u32, f64)>,
    finished: BTreeMap<String, (f64, Option<FailureReason>)>,
}

fn replay(log: &EventLog) -> Replay {
    let mut r = Replay::default();
    for e in log.events() {
        match e.kind {
            EventKind::PilotNew => {
                r.pilot_cores.insert(e.entity.clone(), e.u64_field("cores").unwrap() as u32);
            }
            EventKind::PilotActive => {
                r.active.insert(e.entity.clone(), e.time);
            }
            EventKind::PilotDone | EventKind::PilotFailed | EventKind::PilotCanceled => {
                r.ended.insert(e.entity.clone(), e.time);
            }
            EventKind::UnitScheduled => {
                r.bound.insert(e.entity.clone(), (e.str_field("pilot").unwrap().into(), e.time));
            }
            EventKind::UnitExecuting => {
                let p = e.str_field("pilot").unwrap().to_string();
                r.exec.insert(e.entity.clone(), (p, e.u64_field("cores").unwrap() as u32, e.time));
            }
            EventKind::UnitDone => {
                r.finished.insert(e.entity.clone(), (e.time, None));
            }
            EventKind::UnitFailed => {
                let reason = serde_json::from_value(e.payload["reason"].clone()).unwrap();
                r.finished.insert(e.entity.clone(), (e.time, Some(reason)));
            }
            _ => {}
        }
    }
    r
}

fn check_invariants(log: &EventLog) {
    let r = replay(log);
    // late binding
    for (unit, (pilot, at)) in &r.bound {
        let active = r.active.get(pilot).unwrap_or_else(|| panic!("{unit} bound to inactive {pilot}"));
        assert!(at >= active, "{unit} bound at {at} before {pilot} active at {active}");
    }
    // slot safety at every executing start
    for (unit, (pilot, _, start)) in &r.exec {
        let busy: u32 = r
            .exec
            .iter()
            .filter(|(_, (p, _, s))| p == pilot && s <= start)
            .filter(|(u, _)| r.finished.get(*u).is_none_or(|(end, _)| end > start))
            .map(|(_, (_, c, _))| *c)
            .sum();
        assert!(busy <= r.pilot_cores[pilot], "{pilot} oversubscribed when {unit} started");
    }
    // lost work: expired units are exactly those executing at pilot end
    for (pilot, end) in &r.ended {
        let running_at_end: BTreeSet<&String> = r
            .exec
            .iter()
            .filter(|(_, (p, _, _))| p == pilot)
            .filter(|(u, _)| r.finished.get(*u).is_none_or(|(e, _)| e >= end))
            .filter(|(u, _)| r.finished.get(*u).is_none_or(|(_, why)| why.is_some()))
            .map(|(u, _)| u)
            .collect();
        let lost: BTreeSet<&String> = r
            .finished
            .iter()
            .filter(|(_, (_, why))| matches!(why, Some(FailureReason::PilotExpired | FailureReason::PilotKilled)))
            .filter(|(u, _)| r.exec.get(*u).is_some_and(|(p, _, _)| p == pilot))
            .map(|(u, _)| u)
            .collect();
        assert_eq!(running_at_end, lost, "lost work on {pilot}");
    }
}

#[test]
fn pilot_on_empty_resource_activates_at_zero() {
    let mut s = session(&[("r", 64)]);
    let p = s.submit_pilot(pd("r", 16, 3600.0)).unwrap();
    assert_eq!(s.pilot(&p).unwrap().current(), State::Active);
    assert_eq!(s.pilot(&p).unwrap().active_at(), Some(0.0));
}

#[test]
fn pilot_errors_propagate() {
    let mut s = session(&[("r", 64)]);
    assert!(matches!(
        s.submit_pilot(pd("r", 16, 1e6)),
        Err(PilotError::Resource(ResourceError::WalltimeExceedsQueueLimit { .. }))
    ));
    assert!(matches!(
        s.submit_pilot(pd("r", 128, 10.0)),
        Err(PilotError::Resource(ResourceError::OversizedJob { .. }))
    ));
    assert!(matches!(s.submit_pilot(pd("x", 1, 10.0)), Err(PilotError::UnknownResource(_))));
}

#[test]
fn expiry_fails_in_flight_units() {
    let mut s = session(&[("r", 8)]);
    let p = s.submit_pilot(pd("r", 4, 250.0)).unwrap();
    let mut batch = units("u", 8, 1, 100.0);
    batch.extend(units("w", 2, 1, 40.0));
    s.submit_units(batch).unwrap();
    s.run_to_completion();
    assert_eq!(s.now(), 240.0);
    s.advance_to(300.0);
    assert_eq!(s.pilot(&p).unwrap().current(), State::Done);
    assert_eq!(s.pilot(&p).unwrap().ended_at(), Some(250.0));
    let expired: Vec<&str> = s
        .units()
        .filter(|u| u.reason == Some(FailureReason::PilotExpired))
        .map(|u| u.unit_id.as_str())
        .collect();
    // u000..u007 run at 0 and 100; w000/w001 fit the last 50 s, nothing is lost
    assert!(expired.is_empty());
    assert!(s.units().all(|u| u.current() == State::Done));
    check_invariants(s.log());

    // perturbation stretches runtimes past the pilot end
    let mut s = session(&[("r", 8)]);
    s = s.with_perturbation(Perturbation { spread: 0.5, seed: 3 });
    s.submit_pilot(pd("r", 8, 110.0)).unwrap();
    s.submit_units(units("u", 8, 1, 100.0)).unwrap();
    s.run_to_completion();
    let r = replay(s.log());
    assert!(r.finished.values().any(|(_, why)| *why == Some(FailureReason::PilotExpired)));
    check_invariants(s.log());
}

#[test]
fn unit_submission_rules() {
    let mut s = session(&[("r", 8)]);
    assert!(s.submit_units(Vec::new()).unwrap().is_empty());
    let ids = s.submit_units(units("u", 100, 1, 10.0)).unwrap();
    assert_eq!(ids, (0..100).map(|i| format!("u{i:03}")).collect::<Vec<_>>());
    assert!(s.units().all(|u| u.current() == State::New));
    assert!(matches!(s.submit_units(units("u", 1, 1, 10.0)), Err(PilotError::DuplicateUnitId(_))));
    let mut twice = units("v", 1, 1, 1.0);
    twice.extend(units("v", 1, 1, 1.0));
    assert!(matches!(s.submit_units(twice), Err(PilotError::DuplicateUnitId(_))));
    // no active pilot: nothing binds
    assert!(s.schedule().is_empty());
    assert_eq!(s.pending().count(), 100);
}

#[test]
fn oversized_unit_becomes_unschedulable() {
    let mut s = session(&[("r", 32)]);
    s.submit_units(units("big", 1, 16, 10.0)).unwrap();
    s.submit_units(units("small", 1, 1, 10.0)).unwrap();
    assert_eq!(s.unit("big000").unwrap().current(), State::New);
    let pilots = [pd("r", 4, 100.0), pd("r", 8, 100.0)];
    for p in &pilots {
        s.submit_pilot(p.clone()).unwrap();
    }
    s.run_to_completion();
    // oracle: no pilot in the set has >= 16 cores
    let fits_any = |c: u32| pilots.iter().any(|p| p.cores >= c);
    assert!(!fits_any(16));
    assert_eq!(s.unit("big000").unwrap().reason, Some(FailureReason::Unschedulable));
    assert_eq!(s.unit("small000").unwrap().current(), State::Done);
}

#[test]
fn round_robin_over_two_pilots() {
    let mut s = session(&[("r", 64)]);
    let a = s.submit_pilot(pd("r", 16, 3600.0)).unwrap();
    let b = s.submit_pilot(pd("r", 16, 3600.0)).unwrap();
    s.submit_units(units("u", 10, 1, 10.0)).unwrap();
    let bound = s.schedule();
    assert_eq!(bound.iter().filter(|(_, p)| *p == a).count(), 5);
    assert_eq!(bound.iter().filter(|(_, p)| *p == b).count(), 5);
}

#[test]
fn agent_slot_arithmetic() {
    // four 1-core units on 4 cores run concurrently
    let mut s = session(&[("r", 4)]);
    let p = s.submit_pilot(pd("r", 4, 3600.0)).unwrap();
    s.submit_units(units("u", 4, 1, 100.0)).unwrap();
    s.run_to_completion();
    let r = replay(s.log());
    let makespan = r.finished.values().map(|(t, _)| *t).fold(0.0, f64::max)
        - r.exec.values().map(|(_, _, t)| *t).fold(f64::INFINITY, f64::min);
    assert_eq!(makespan, 100.0);
    let stream = s.agent_events(&p);
    assert_eq!(stream.iter().filter(|e| e.kind == AgentEventKind::Executing).count(), 4);
    assert_eq!(stream.iter().filter(|e| e.kind == AgentEventKind::Done).count(), 4);

    // two 4-core units serialize
    let mut s = session(&[("r", 4)]);
    s.submit_pilot(pd("r", 4, 3600.0)).unwrap();
    s.submit_units(units("m", 2, 4, 100.0)).unwrap();
    s.run_to_completion();
    let ends: Vec<f64> = s.units().map(|u| u.end.unwrap()).collect();
    assert_eq!(ends, vec![100.0, 200.0]);

    // an 8-core unit never lands on a 4-core pilot
    let mut s = session(&[("r", 16)]);
    let small = s.submit_pilot(pd("r", 4, 3600.0)).unwrap();
    s.submit_pilot(pd("r", 8, 3600.0)).unwrap();
    s.submit_units(units("x", 3, 8, 10.0)).unwrap();
    s.run_to_completion();
    assert!(s.units().all(|u| u.bound_pilot.as_deref() != Some(small.as_str())));
    assert!(s.units().all(|u| u.current() == State::Done));
}

#[test]
fn capacity_snapshot() {
    let mut s = session(&[("r", 64)]);
    assert_eq!(s.capacity().total_cores, 0);
    assert_eq!(s.capacity().free_cores, 0);
    let p = s.submit_pilot(pd("r", 16, 3600.0)).unwrap();
    s.submit_units(units("u", 1, 4, 100.0)).unwrap();
    s.schedule();
    let cap = s.expose_capacity(std::slice::from_ref(&p));
    assert_eq!(cap.pilots[0].free_cores, 12);
    assert_eq!(cap.free_cores, 12);
    assert_eq!(cap.remaining_seconds, 3600.0);
}

#[test]
fn faults_kill_pilots_and_fail_tasks() {
    let mut s = session(&[("r", 16)]).with_faults(vec![
        Fault {
            time: 50.0,
            target: "pilot.0000".into(),
            kind: FaultKind::KillPilot,
        },
        Fault {
            time: 10.0,
            target: "v000".into(),
            kind: FaultKind::FailTask,
        },
    ]);
    s.submit_pilot(pd("r", 4, 3600.0)).unwrap();
    s.submit_pilot(pd("r", 4, 3600.0)).unwrap();
    s.submit_units(units("u", 4, 2, 100.0)).unwrap();
    s.submit_units(units("v", 1, 1, 20.0)).unwrap();
    s.run_to_completion();
    assert_eq!(s.pilot("pilot.0000").unwrap().current(), State::Failed);
    let killed: Vec<_> = s
        .units()
        .filter(|u| u.reason == Some(FailureReason::PilotKilled))
        .map(|u| u.bound_pilot.clone().unwrap())
        .collect();
    assert!(!killed.is_empty());
    assert!(killed.iter().all(|p| p == "pilot.0000"));
    assert_eq!(s.unit("v000").unwrap().reason, Some(FailureReason::Injected));
    check_invariants(s.log());
}

#[test]
fn startup_delay_defers_binding() {
    let mut s = PilotSession::new();
    s.add_connector(Box::new(DedicatedConnector::new("slow", 8, 3600.0).with_startup_delay(300.0)))
        .unwrap();
    let p = s.submit_pilot(pd("slow", 8, 1000.0)).unwrap();
    s.submit_units(units("u", 3, 1, 10.0)).unwrap();
    assert_eq!(s.pilot(&p).unwrap().current(), State::Queued);
    s.run_to_completion();
    assert!(s.units().all(|u| u.bound_at() == Some(300.0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_hold_over_random_sessions(
        pilots in prop::collection::vec((1..=8u32, 50.0..500.0f64, 0.0..200.0f64), 1..5),
        work in prop::collection::vec((1..=8u32, 1.0..120.0f64), 1..40),
        spread in 0.0..0.6f64,
        seed in any::<u64>(),
    ) {
        let mut s = session(&[("r", 16), ("q", 8)]).with_perturbation(Perturbation { spread, seed });
        let tasks: Vec<ComputeUnit> = work
            .iter()
            .enumerate()
            .map(|(i, &(c, rt))| {
                let t = TaskDescription::new(format!("t{i:02}"), "/bin/true", rt.round());
                ComputeUnit::from_task(if c > 1 { t.mpi(c) } else { t })
            })
            .collect();
        s.submit_units(tasks).unwrap();
        let mut order: Vec<_> = pilots.clone();
        order.sort_by(|a, b| a.2.total_cmp(&b.2));
        for (k, (c, d, at)) in order.into_iter().enumerate() {
            s.advance_to(at.round());
            let target = if k % 2 == 0 { "r" } else { "q" };
            s.submit_pilot(pd(target, c, d.round())).unwrap();
        }
        s.run_to_completion();
        check_invariants(s.log());

        // capacity equals an independent recount of executing cores
        let r = replay(s.log());
        let cap = s.capacity();
        for pc in &cap.pilots {
            let busy: u32 = r
                .exec
                .iter()
                .filter(|(u, (p, _, _))| *p == pc.pilot_id && !r.finished.contains_key(*u))
                .map(|(_, (_, c, _))| *c)
                .sum();
            prop_assert_eq!(pc.free_cores, r.pilot_cores[&pc.pilot_id] - busy);
        }
    }

    #[test]
    fn capacity_matches_recount_mid_run(
        work in prop::collection::vec((1..=4u32, 10.0..100.0f64), 1..30),
        probe in 0.0..150.0f64,
    ) {
        let mut s = session(&[("r", 32)]);
        s.submit_pilot(pd("r", 8, 1000.0)).unwrap();
        s.submit_pilot(pd("r", 6, 1000.0)).unwrap();
        let tasks: Vec<ComputeUnit> = work
            .iter()
            .enumerate()
            .map(|(i, &(c, rt))| ComputeUnit::from_task(TaskDescription::new(format!("t{i:02}"), "x", rt).mpi(c)))
            .collect();
        s.submit_units(tasks).unwrap();
        s.schedule();
        s.advance_to(probe);
        let cap = s.capacity();
        let mut per: BTreeMap<String, u32> = BTreeMap::new();
        for u in s.units().filter(|u| u.current() == State::Executing) {
            *per.entry(u.bound_pilot.clone().unwrap()).or_default() += u.task.cores;
        }
        let total_free: u64 = cap.pilots.iter().map(|p| u64::from(p.cores - per.get(&p.pilot_id).copied().unwrap_or(0))).sum();
        prop_assert_eq!(cap.free_cores, total_free);
        prop_assert_eq!(cap.total_cores, 14);
    }
}

#[test]
fn identical_sessions_identical_logs() {
    let run = || {
        let mut s = session(&[("r", 16)]).with_perturbation(Perturbation { spread: 0.3, seed: 9 });
        s.submit_pilot(pd("r", 8, 400.0)).unwrap();
        s.submit_units(units("u", 30, 1, 60.0)).unwrap();
        s.run_to_completion();
        s.into_log().to_jsonl()
    };
    assert_eq!(run(), run());
}
