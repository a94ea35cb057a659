//! Discrete-event simulated batch system with FCFS and EASY backfill queues.

use std::collections::HashMap;

use blockflow_core::{
    Connectivity, EntityKind, EntityState, Event, EventKind, EventLog, FailureReason, JobDescription, JobOrigin,
    PlaceholderUpdate, QueueInfo, ResourceConnector, ResourceError, State, TransitionEvent,
};
use serde_json::json;

use crate::backend::{Backend, JobStatus};
use crate::easy::{easy_pass, replay_start, RunningJob, WaitingJob};
use crate::model::{ModelError, Policy, ResourceModel, TraceEntry};

#[derive(Debug, Clone)]
pub struct SimJob {
    pub id: String,
    pub desc: JobDescription,
    pub state: EntityState,
    pub reason: Option<FailureReason>,
    pub submitted: f64,
    pub started: Option<f64>,
    pub ended: Option<f64>,
    /// Most recent reservation made for this job while it headed the queue.
    pub reserved: Option<f64>,
}

impl SimJob {
    fn expected_end(&self) -> f64 {
        self.started.expect("running job has a start") + self.desc.walltime_limit
    }

    fn actual_end(&self) -> f64 {
        let run = self.desc.runtime.unwrap_or(self.desc.walltime_limit);
        self.started.expect("running job has a start") + run.min(self.desc.walltime_limit)
    }

    fn status(&self) -> JobStatus {
        JobStatus {
            state: self.state.current(),
            reason: self.reason.clone(),
            submitted: self.submitted,
            started: self.started,
            ended: self.ended,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimBatch {
    model: ResourceModel,
    actor: String,
    now: f64,
    jobs: Vec<SimJob>,
    index: HashMap<String, usize>,
    queue: Vec<usize>,
    running: Vec<usize>,
    trace: Vec<TraceEntry>,
    trace_cursor: usize,
    reservation: Option<(usize, f64)>,
    log: EventLog,
    drained: usize,
    updates: Vec<PlaceholderUpdate>,
}

impl SimBatch {
    pub fn new(model: ResourceModel) -> Result<Self, ModelError> {
        model.validate()?;
        let mut trace = model.background_load_trace.clone();
        trace.sort_by(|a, b| a.arrival().total_cmp(&b.arrival()));
        let mut sim = SimBatch {
            actor: format!("resource:{}", model.resource_id),
            model,
            now: 0.0,
            jobs: Vec::new(),
            index: HashMap::new(),
            queue: Vec::new(),
            running: Vec::new(),
            trace,
            trace_cursor: 0,
            reservation: None,
            log: EventLog::new(),
            drained: 0,
            updates: Vec::new(),
        };
        sim.process_until(0.0);
        Ok(sim)
    }

    pub fn model(&self) -> &ResourceModel {
        &self.model
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn job(&self, job_id: &str) -> Option<&SimJob> {
        self.index.get(job_id).map(|&i| &self.jobs[i])
    }

    pub fn jobs(&self) -> &[SimJob] {
        &self.jobs
    }

    pub fn running_cores(&self) -> u64 {
        self.running.iter().map(|&i| u64::from(self.jobs[i].desc.cores)).sum()
    }

    pub fn free_cores(&self) -> u64 {
        u64::from(self.model.total_cores) - self.running_cores()
    }

    /// Queued job ids in scheduling order.
    pub fn queued(&self) -> Vec<&str> {
        self.queue.iter().map(|&i| self.jobs[i].id.as_str()).collect()
    }

    pub fn next_event_time(&self) -> Option<f64> {
        let arrival = self.trace.get(self.trace_cursor).map(|e| e.arrival());
        let end = self
            .running
            .iter()
            .map(|&i| self.jobs[i].actual_end())
            .reduce(f64::min);
        match (arrival, end) {
            (Some(a), Some(e)) => Some(a.min(e).max(self.now)),
            (Some(t), None) | (None, Some(t)) => Some(t.max(self.now)),
            (None, None) => None,
        }
    }

    fn process_until(&mut self, until: f64) {
        while let Some(t) = self.next_event_time() {
            if t > until {
                break;
            }
            self.now = t;
            self.complete_due();
            self.ingest_trace();
            self.schedule();
        }
        self.now = self.now.max(until);
    }

    fn complete_due(&mut self) {
        let now = self.now;
        let mut due: Vec<usize> = self
            .running
            .iter()
            .copied()
            .filter(|&i| self.jobs[i].actual_end() <= now)
            .collect();
        due.sort_by(|&a, &b| self.jobs[a].actual_end().total_cmp(&self.jobs[b].actual_end()).then(a.cmp(&b)));
        self.running.retain(|i| !due.contains(i));
        for i in due {
            let job = &self.jobs[i];
            let overran = job.desc.runtime.is_some_and(|r| r > job.desc.walltime_limit);
            if overran {
                self.finish(i, TransitionEvent::Fail, Some(FailureReason::Walltime));
            } else {
                self.finish(i, TransitionEvent::Complete, None);
            }
        }
    }

    fn ingest_trace(&mut self) {
        while let Some(entry) = self.trace.get(self.trace_cursor).copied() {
            if entry.arrival() > self.now {
                break;
            }
            self.trace_cursor += 1;
            let jd = self.model.background_job(&entry);
            self.enqueue(jd);
        }
    }

    fn enqueue(&mut self, desc: JobDescription) -> String {
        let idx = self.jobs.len();
        let id = format!("{}.job.{idx:06}", self.model.resource_id);
        let mut state = EntityState::new(EntityKind::Job, self.now, &self.actor);
        state
            .apply(TransitionEvent::Enqueue, self.now, &self.actor)
            .expect("new job can be queued");
        self.log.record(
            self.now,
            &id,
            EventKind::JobQueued,
            json!({
                "resource": self.model.resource_id,
                "cores": desc.cores,
                "walltime": desc.walltime_limit,
                "queue": desc.queue_name,
                "origin": desc.origin,
            }),
        );
        self.jobs.push(SimJob {
            id: id.clone(),
            desc,
            state,
            reason: None,
            submitted: self.now,
            started: None,
            ended: None,
            reserved: None,
        });
        self.index.insert(id.clone(), idx);
        self.queue.push(idx);
        id
    }

    fn backfill_allowed(&self, queue: &str) -> bool {
        self.model.queue(queue).map(|q| q.policy) == Some(Policy::FcfsBackfill)
    }

    fn schedule(&mut self) {
        let running: Vec<RunningJob> = self
            .running
            .iter()
            .map(|&i| RunningJob {
                cores: self.jobs[i].desc.cores,
                expected_end: self.jobs[i].expected_end(),
            })
            .collect();
        let waiting: Vec<WaitingJob> = self
            .queue
            .iter()
            .map(|&i| WaitingJob {
                cores: self.jobs[i].desc.cores,
                walltime: self.jobs[i].desc.walltime_limit,
                backfill: self.backfill_allowed(&self.jobs[i].desc.queue_name),
            })
            .collect();
        let pass = easy_pass(self.now, self.model.total_cores, &running, &waiting);

        let started: Vec<(usize, bool)> = pass.started.iter().map(|&(p, bf)| (self.queue[p], bf)).collect();
        if let Some((pos, at)) = pass.reservation {
            let job = self.queue[pos];
            if self.reservation != Some((job, at)) {
                self.reservation = Some((job, at));
                self.jobs[job].reserved = Some(at);
                self.log.record(self.now, &self.jobs[job].id, EventKind::JobReserved, json!({ "start": at }));
            }
        } else {
            self.reservation = None;
        }
        for (idx, backfill) in started {
            self.queue.retain(|&q| q != idx);
            self.start(idx, backfill);
        }
    }

    fn start(&mut self, idx: usize, backfill: bool) {
        let now = self.now;
        let job = &mut self.jobs[idx];
        job.state
            .apply(TransitionEvent::Run, now, &self.actor)
            .expect("queued job can run");
        job.started = Some(now);
        let payload = json!({
            "backfill": backfill,
            "cores": job.desc.cores,
            "wait": now - job.submitted,
        });
        let id = job.id.clone();
        let origin = job.desc.origin;
        self.running.push(idx);
        self.log.record(now, &id, EventKind::JobStarted, payload);
        if origin != JobOrigin::Background {
            self.updates.push(PlaceholderUpdate {
                job_id: id,
                time: now,
                state: State::Running,
                reason: None,
            });
        }
    }

    fn finish(&mut self, idx: usize, event: TransitionEvent, reason: Option<FailureReason>) {
        let now = self.now;
        let actor = self.actor.clone();
        let job = &mut self.jobs[idx];
        let to = job.state.apply(event, now, &actor).expect("legal terminal transition");
        job.ended = Some(now);
        job.reason = reason.clone();
        let (kind, payload) = match to {
            State::Done => (EventKind::JobDone, serde_json::Value::Null),
            State::Failed => (EventKind::JobFailed, json!({ "reason": reason })),
            _ => (EventKind::JobCanceled, serde_json::Value::Null),
        };
        let id = job.id.clone();
        let origin = job.desc.origin;
        self.log.record(now, &id, kind, payload);
        if origin != JobOrigin::Background {
            self.updates.push(PlaceholderUpdate {
                job_id: id,
                time: now,
                state: to,
                reason,
            });
        }
    }

    fn lookup(&self, job_id: &str) -> Result<usize, ResourceError> {
        self.index
            .get(job_id)
            .copied()
            .ok_or_else(|| ResourceError::UnknownJob(job_id.to_string()))
    }

    /// Start time the head of the queue currently holds, if any.
    pub fn current_reservation(&self) -> Option<(&str, f64)> {
        self.reservation.map(|(i, t)| (self.jobs[i].id.as_str(), t))
    }
}

impl Backend for SimBatch {
    fn resource_id(&self) -> &str {
        &self.model.resource_id
    }

    fn now(&self) -> f64 {
        self.now
    }

    fn submit_job(&mut self, jd: JobDescription) -> Result<String, ResourceError> {
        self.model.check_job(&jd)?;
        let id = self.enqueue(jd);
        self.schedule();
        Ok(id)
    }

    fn job_state(&self, job_id: &str) -> Result<JobStatus, ResourceError> {
        Ok(self.jobs[self.lookup(job_id)?].status())
    }

    fn cancel_job(&mut self, job_id: &str) -> Result<(), ResourceError> {
        let idx = self.lookup(job_id)?;
        let current = self.jobs[idx].state.current();
        if current.is_terminal() {
            return Err(blockflow_core::StateError::IllegalTransition {
                kind: EntityKind::Job,
                from: current,
                event: TransitionEvent::Cancel,
            }
            .into());
        }
        self.queue.retain(|&q| q != idx);
        self.running.retain(|&r| r != idx);
        self.finish(idx, TransitionEvent::Cancel, None);
        self.schedule();
        Ok(())
    }

    fn estimate_queue_wait(&self, jd: &JobDescription) -> Result<f64, ResourceError> {
        self.model.check_job(jd)?;
        let running: Vec<RunningJob> = self
            .running
            .iter()
            .map(|&i| RunningJob {
                cores: self.jobs[i].desc.cores,
                expected_end: self.jobs[i].expected_end(),
            })
            .collect();
        let mut waiting: Vec<WaitingJob> = self
            .queue
            .iter()
            .map(|&i| WaitingJob {
                cores: self.jobs[i].desc.cores,
                walltime: self.jobs[i].desc.walltime_limit,
                backfill: self.backfill_allowed(&self.jobs[i].desc.queue_name),
            })
            .collect();
        waiting.push(WaitingJob {
            cores: jd.cores,
            walltime: jd.walltime_limit,
            backfill: self.backfill_allowed(&jd.queue_name),
        });
        let target = waiting.len() - 1;
        let start = replay_start(self.now, self.model.total_cores, &running, &waiting, target);
        Ok(start - self.now)
    }

    fn step_queue(&mut self, until: f64) -> Vec<Event> {
        let before = self.log.len();
        self.process_until(until);
        self.log.events()[before..].to_vec()
    }

    fn queue_len(&self) -> usize {
        self.queue.len()
    }
}

impl ResourceConnector for SimBatch {
    fn resource_id(&self) -> &str {
        &self.model.resource_id
    }

    fn total_cores(&self) -> u32 {
        self.model.total_cores
    }

    fn connectivity(&self) -> Connectivity {
        self.model.connectivity
    }

    fn queues(&self) -> Vec<QueueInfo> {
        self.model.queue_infos()
    }

    fn now(&self) -> f64 {
        self.now
    }

    fn submit(&mut self, jd: JobDescription) -> Result<String, ResourceError> {
        self.submit_job(jd)
    }

    fn cancel(&mut self, job_id: &str) -> Result<(), ResourceError> {
        self.cancel_job(job_id)
    }

    fn next_event_time(&self) -> Option<f64> {
        SimBatch::next_event_time(self)
    }

    fn advance(&mut self, until: f64) -> Vec<PlaceholderUpdate> {
        self.process_until(until);
        std::mem::take(&mut self.updates)
    }

    fn drain_events(&mut self) -> Vec<Event> {
        let out = self.log.events()[self.drained..].to_vec();
        self.drained = self.log.len();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(policy: Policy) -> SimBatch {
        SimBatch::new(ResourceModel::single_queue("m", 100, 1e6, policy)).unwrap()
    }

    fn job(cores: u32, walltime: f64) -> JobDescription {
        JobDescription::new(cores, walltime, "batch")
    }

    #[test]
    fn empty_step_yields_no_events() {
        let mut sim = machine(Policy::FcfsBackfill);
        assert!(sim.step_queue(1000.0).is_empty());
        assert_eq!(sim.now, 1000.0);
    }

    #[test]
    fn runs_immediately_when_free() {
        let mut sim = machine(Policy::Fcfs);
        let id = sim.submit_job(job(10, 50.0)).unwrap();
        assert_eq!(sim.job_state(&id).unwrap().state, State::Running);
        sim.step_queue(100.0);
        let st = sim.job_state(&id).unwrap();
        assert_eq!((st.state, st.ended), (State::Done, Some(50.0)));
    }

    #[test]
    fn walltime_overrun_fails() {
        let mut sim = machine(Policy::Fcfs);
        let id = sim.submit_job(job(1, 10.0).with_runtime(20.0)).unwrap();
        sim.step_queue(30.0);
        let st = sim.job_state(&id).unwrap();
        assert_eq!(st.state, State::Failed);
        assert_eq!(st.reason, Some(FailureReason::Walltime));
        assert_eq!(st.ended, Some(10.0));
    }

    #[test]
    fn cancel_semantics() {
        let mut sim = machine(Policy::Fcfs);
        let a = sim.submit_job(job(100, 50.0)).unwrap();
        let b = sim.submit_job(job(10, 50.0)).unwrap();
        assert_eq!(sim.queue_len(), 1);
        sim.cancel_job(&b).unwrap();
        assert_eq!(sim.queue_len(), 0);
        assert_eq!(sim.job_state(&b).unwrap().state, State::Canceled);
        sim.step_queue(60.0);
        assert!(matches!(
            sim.cancel_job(&a),
            Err(ResourceError::State(blockflow_core::StateError::IllegalTransition { .. }))
        ));
        assert!(matches!(sim.job_state("nope"), Err(ResourceError::UnknownJob(_))));
    }

    #[test]
    fn trace_jobs_arrive_on_time() {
        let mut m = ResourceModel::single_queue("m", 100, 1e6, Policy::Fcfs);
        m.background_load_trace = vec![TraceEntry(0.0, 100, 500.0), TraceEntry(10.0, 50, 5.0)];
        let mut sim = SimBatch::new(m).unwrap();
        assert_eq!(sim.running_cores(), 100);
        assert_eq!(sim.estimate_queue_wait(&job(1, 1.0)).unwrap(), 500.0);
        let events = sim.step_queue(10.0);
        assert_eq!(events.len(), 2, "{events:?}"); // queued + reservation
        assert_eq!(sim.queue_len(), 1);
        sim.step_queue(600.0);
        assert_eq!(sim.queue_len(), 0);
        assert_eq!(sim.running_cores(), 0);
    }
}
