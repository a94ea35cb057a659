//! Checks over finished event logs.

use std::collections::BTreeMap;

use blockflow_core::{EventKind, EventLog};

const EPS: f64 = 1e-9;

/// Units placed on a pilot before that pilot became active. Empty when
/// binding was late everywhere.
pub fn late_binding_violations(log: &EventLog) -> Vec<String> {
    let mut active: BTreeMap<&str, f64> = BTreeMap::new();
    let mut out = Vec::new();
    for e in log.events() {
        match e.kind {
            EventKind::PilotActive => {
                active.insert(&e.entity, e.time);
            }
            EventKind::UnitScheduled | EventKind::UnitSubmitted | EventKind::UnitExecuting => {
                let Some(pilot) = e.str_field("pilot") else {
                    out.push(format!("{}: {:?} names no pilot", e.entity, e.kind));
                    continue;
                };
                match active.get(pilot) {
                    Some(&t) if e.time + EPS >= t => {}
                    Some(&t) => out.push(format!("{}: {:?} at {} before {pilot} active at {t}", e.entity, e.kind, e.time)),
                    None => out.push(format!("{}: {:?} at {} on inactive {pilot}", e.entity, e.kind, e.time)),
                }
            }
            _ => {}
        }
    }
    out
}

/// Violations of the batch scheduler's guarantees: per-resource capacity,
/// reservations that move later, and reserved jobs starting after their
/// reservation. `capacity` maps resource ids to core counts; jobs on other
/// resources are ignored.
pub fn easy_violations(log: &EventLog, capacity: &BTreeMap<String, u64>) -> Vec<String> {
    let mut job_resource: BTreeMap<&str, (&str, u64)> = BTreeMap::new();
    let mut running: BTreeMap<&str, u64> = BTreeMap::new();
    let mut in_use: BTreeMap<&str, u64> = BTreeMap::new();
    let mut reserved: BTreeMap<&str, f64> = BTreeMap::new();
    let mut out = Vec::new();
    for e in log.events() {
        match e.kind {
            EventKind::JobQueued => {
                if let (Some(r), Some(c)) = (e.str_field("resource"), e.u64_field("cores")) {
                    if capacity.contains_key(r) {
                        job_resource.insert(&e.entity, (r, c));
                    }
                }
            }
            EventKind::JobReserved => {
                let Some(at) = e.f64_field("start") else { continue };
                if let Some(&prev) = reserved.get(e.entity.as_str()) {
                    if at > prev + EPS {
                        out.push(format!("{}: reservation moved from {prev} to {at}", e.entity));
                    }
                }
                reserved.insert(&e.entity, at);
            }
            EventKind::JobStarted => {
                let Some(&(r, cores)) = job_resource.get(e.entity.as_str()) else { continue };
                if let Some(&at) = reserved.get(e.entity.as_str()) {
                    if e.time > at + EPS {
                        out.push(format!("{}: started at {} after reservation {at}", e.entity, e.time));
                    }
                }
                let used = in_use.entry(r).or_default();
                *used += cores;
                if *used > capacity[r] {
                    out.push(format!("{r}: {used} cores in use at {}, capacity {}", e.time, capacity[r]));
                }
                running.insert(&e.entity, cores);
            }
            EventKind::JobDone | EventKind::JobFailed | EventKind::JobCanceled => {
                if let Some(cores) = running.remove(e.entity.as_str()) {
                    let (r, _) = job_resource[e.entity.as_str()];
                    *in_use.get_mut(r).expect("started") -= cores;
                }
            }
            _ => {}
        }
    }
    out
}
