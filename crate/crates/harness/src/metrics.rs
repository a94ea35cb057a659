//! Run metrics, computed from the event log alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use blockflow_core::{Event, EventKind, EventLog, JobOrigin};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const CSV_HEADER: &str = "ttc,utilization,mean_wait,done,failed,resubmitted";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Last task end minus first task ingestion, in seconds.
    pub ttc: f64,
    /// Core-seconds used by tasks over core-seconds held, across resources.
    pub utilization: f64,
    /// Mean queue wait of the jobs this run submitted.
    pub mean_wait: f64,
    pub done: usize,
    /// Tasks that ended failed or canceled.
    pub failed: usize,
    pub resubmitted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            other => Err(HarnessError::Config(format!("unknown report format `{other}`"))),
        }
    }
}

fn malformed(e: &Event, what: &str) -> HarnessError {
    HarnessError::MalformedLog(format!("{:?} of `{}` at t={}: {what}", e.kind, e.entity, e.time))
}

fn field_str<'a>(e: &'a Event, key: &str) -> Result<&'a str, HarnessError> {
    e.str_field(key).ok_or_else(|| malformed(e, &format!("missing `{key}`")))
}

fn field_u64(e: &Event, key: &str) -> Result<u64, HarnessError> {
    e.u64_field(key).ok_or_else(|| malformed(e, &format!("missing `{key}`")))
}

#[derive(Default)]
struct Usage {
    used: f64,
    held: f64,
}

/// Core-seconds used and held per resource. Pilot jobs count from
/// activation to end; direct task jobs hold exactly what they use.
fn usage(log: &EventLog) -> Result<BTreeMap<String, Usage>, HarnessError> {
    let task_origin = serde_json::to_value(JobOrigin::Task).expect("plain enum");
    let mut out: BTreeMap<String, Usage> = BTreeMap::new();
    // pilot -> (resource, cores, active since)
    let mut pilots: BTreeMap<&str, (String, u64, f64)> = BTreeMap::new();
    let mut open_pilots: BTreeMap<&str, ()> = BTreeMap::new();
    // unit -> (resource, cores, start)
    let mut units: BTreeMap<&str, (String, u64, f64)> = BTreeMap::new();
    // task job -> (resource, cores), then start
    let mut jobs: BTreeMap<&str, (String, u64)> = BTreeMap::new();
    let mut running_jobs: BTreeMap<&str, (String, u64, f64)> = BTreeMap::new();

    for e in log.events() {
        match e.kind {
            EventKind::PilotActive => {
                let resource = field_str(e, "resource")?.to_string();
                out.entry(resource.clone()).or_default();
                pilots.insert(&e.entity, (resource, field_u64(e, "cores")?, e.time));
                open_pilots.insert(&e.entity, ());
            }
            EventKind::PilotDone | EventKind::PilotFailed | EventKind::PilotCanceled => {
                if open_pilots.remove(e.entity.as_str()).is_some() {
                    let (resource, cores, since) = &pilots[e.entity.as_str()];
                    out.get_mut(resource).expect("seen").held += *cores as f64 * (e.time - since);
                }
            }
            EventKind::UnitExecuting => {
                let pilot = field_str(e, "pilot")?;
                let (resource, _, _) = pilots
                    .get(pilot)
                    .ok_or_else(|| malformed(e, &format!("pilot `{pilot}` was never active")))?;
                units.insert(&e.entity, (resource.clone(), field_u64(e, "cores")?, e.time));
            }
            EventKind::UnitDone | EventKind::UnitFailed | EventKind::UnitCanceled => {
                if let Some((resource, cores, start)) = units.remove(e.entity.as_str()) {
                    out.get_mut(&resource).expect("seen").used += cores as f64 * (e.time - start);
                }
            }
            EventKind::JobQueued => {
                if e.payload.get("origin") == Some(&task_origin) {
                    jobs.insert(&e.entity, (field_str(e, "resource")?.to_string(), field_u64(e, "cores")?));
                }
            }
            EventKind::JobStarted => {
                if let Some((resource, cores)) = jobs.remove(e.entity.as_str()) {
                    running_jobs.insert(&e.entity, (resource, cores, e.time));
                }
            }
            EventKind::JobDone | EventKind::JobFailed | EventKind::JobCanceled => {
                if let Some((resource, cores, start)) = running_jobs.remove(e.entity.as_str()) {
                    let u = out.entry(resource).or_default();
                    let cs = cores as f64 * (e.time - start);
                    u.used += cs;
                    u.held += cs;
                }
            }
            _ => {}
        }
    }
    if let Some((p, _)) = open_pilots.first_key_value() {
        return Err(HarnessError::MalformedLog(format!("pilot `{p}` never ended")));
    }
    if let Some((u, _)) = units.first_key_value() {
        return Err(HarnessError::MalformedLog(format!("unit `{u}` never ended")));
    }
    if let Some((j, _)) = running_jobs.first_key_value() {
        return Err(HarnessError::MalformedLog(format!("job `{j}` never ended")));
    }
    Ok(out)
}

fn ratio(u: &Usage) -> f64 {
    if u.held > 0.0 {
        u.used / u.held
    } else {
        0.0
    }
}

/// Utilization of each resource that hosted pilots or task jobs.
pub fn resource_utilization(log: &EventLog) -> Result<BTreeMap<String, f64>, HarnessError> {
    Ok(usage(log)?.iter().map(|(r, u)| (r.clone(), ratio(u))).collect())
}

/// Metrics of a complete log: every pilot, unit and job that started has
/// also ended.
pub fn compute_metrics(log: &EventLog) -> Result<Metrics, HarnessError> {
    let total = usage(log)?.values().fold(Usage::default(), |acc, u| Usage {
        used: acc.used + u.used,
        held: acc.held + u.held,
    });

    let background = serde_json::to_value(JobOrigin::Background).expect("plain enum");
    let mut own_jobs: BTreeMap<&str, ()> = BTreeMap::new();
    let (mut wait_sum, mut waits) = (0.0, 0usize);
    let mut first_ingest = f64::INFINITY;
    let mut last_end = f64::NEG_INFINITY;
    let mut outcome: BTreeMap<&str, EventKind> = BTreeMap::new();
    let mut resubmitted = 0;
    for e in log.events() {
        match e.kind {
            EventKind::JobQueued if e.payload.get("origin") != Some(&background) => {
                own_jobs.insert(&e.entity, ());
            }
            EventKind::JobStarted if own_jobs.contains_key(e.entity.as_str()) => {
                wait_sum += e.f64_field("wait").ok_or_else(|| malformed(e, "missing `wait`"))?;
                waits += 1;
            }
            EventKind::TaskIngested => first_ingest = first_ingest.min(e.time),
            EventKind::TaskResubmitted => resubmitted += 1,
            EventKind::TaskDone | EventKind::TaskFailed => {
                last_end = last_end.max(e.time);
                outcome.insert(&e.entity, e.kind);
            }
            EventKind::TaskCanceled => {
                outcome.insert(&e.entity, e.kind);
            }
            _ => {}
        }
    }
    let done = outcome.values().filter(|k| **k == EventKind::TaskDone).count();
    Ok(Metrics {
        ttc: if first_ingest.is_finite() && last_end.is_finite() { (last_end - first_ingest).max(0.0) } else { 0.0 },
        utilization: ratio(&total),
        mean_wait: if waits > 0 { wait_sum / waits as f64 } else { 0.0 },
        done,
        failed: outcome.len() - done,
        resubmitted,
    })
}

pub fn format_report(m: &Metrics, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => format!(
            "{CSV_HEADER}\n{},{},{},{},{},{}\n",
            m.ttc, m.utilization, m.mean_wait, m.done, m.failed, m.resubmitted
        ),
        ReportFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "ttc          {:.3} s", m.ttc);
            let _ = writeln!(s, "utilization  {:.4}", m.utilization);
            let _ = writeln!(s, "mean_wait    {:.3} s", m.mean_wait);
            let _ = writeln!(s, "done         {}", m.done);
            let _ = writeln!(s, "failed       {}", m.failed);
            let _ = writeln!(s, "resubmitted  {}", m.resubmitted);
            s
        }
    }
}

/// Reads back a CSV report written by [`format_report`].
pub fn parse_csv(text: &str) -> Result<Metrics, HarnessError> {
    let bad = |what: &str| HarnessError::Config(format!("bad metrics csv: {what}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(bad("unexpected header"));
    }
    let row = lines.next().ok_or_else(|| bad("no data row"))?;
    let cells: Vec<&str> = row.trim().split(',').collect();
    if cells.len() != 6 || lines.next().is_some() {
        return Err(bad("expected exactly one row of six values"));
    }
    let f = |i: usize| cells[i].parse::<f64>().map_err(|e| bad(&e.to_string()));
    let n = |i: usize| cells[i].parse::<usize>().map_err(|e| bad(&e.to_string()));
    Ok(Metrics {
        ttc: f(0)?,
        utilization: f(1)?,
        mean_wait: f(2)?,
        done: n(3)?,
        failed: n(4)?,
        resubmitted: n(5)?,
    })
}
