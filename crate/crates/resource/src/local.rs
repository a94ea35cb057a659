//! Backend that runs jobs as local processes under the same EASY queue.

use std::collections::HashMap;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use blockflow_core::{
    EntityKind, EntityState, Event, EventKind, EventLog, FailureReason, JobDescription, ResourceError, State,
    StateError, TransitionEvent,
};
use log::debug;
use serde_json::json;

use crate::backend::{Backend, JobStatus};
use crate::easy::{easy_pass, replay_start, RunningJob, WaitingJob};
use crate::model::{ModelError, Policy, ResourceModel};

const POLL: Duration = Duration::from_millis(10);

struct LocalJob {
    id: String,
    desc: JobDescription,
    state: EntityState,
    reason: Option<FailureReason>,
    submitted: f64,
    started: Option<f64>,
    ended: Option<f64>,
    child: Option<Child>,
}

pub struct LocalBackend {
    model: ResourceModel,
    actor: String,
    origin: Instant,
    jobs: Vec<LocalJob>,
    index: HashMap<String, usize>,
    queue: Vec<usize>,
    running: Vec<usize>,
    log: EventLog,
}

impl LocalBackend {
    /// Local backends ignore any background trace in the model.
    pub fn new(model: ResourceModel) -> Result<Self, ModelError> {
        model.validate()?;
        Ok(Self {
            actor: format!("resource:{}", model.resource_id),
            model,
            origin: Instant::now(),
            jobs: Vec::new(),
            index: HashMap::new(),
            queue: Vec::new(),
            running: Vec::new(),
            log: EventLog::new(),
        })
    }

    fn clock(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn record(&mut self, id: &str, kind: EventKind, payload: serde_json::Value) {
        let t = self.clock().max(self.log.last_time().unwrap_or(0.0));
        self.log.record(t, id, kind, payload);
    }

    fn backfill_allowed(&self, queue: &str) -> bool {
        self.model.queue(queue).map(|q| q.policy) == Some(Policy::FcfsBackfill)
    }

    fn poll(&mut self) {
        let now = self.clock();
        let mut finished = Vec::new();
        for &i in &self.running {
            let job = &mut self.jobs[i];
            let child = job.child.as_mut().expect("running job has a process");
            match child.try_wait() {
                Ok(Some(status)) if status.success() => finished.push((i, None)),
                Ok(Some(status)) => finished.push((i, Some(FailureReason::ExitStatus(status.code().unwrap_or(-1))))),
                Ok(None) if now - job.started.unwrap_or(now) >= job.desc.walltime_limit => {
                    let _ = child.kill();
                    let _ = child.wait();
                    finished.push((i, Some(FailureReason::Walltime)));
                }
                Ok(None) => {}
                Err(e) => finished.push((i, Some(FailureReason::Spawn(e.to_string())))),
            }
        }
        if finished.is_empty() {
            return;
        }
        for (i, reason) in finished {
            self.running.retain(|&r| r != i);
            let event = if reason.is_some() {
                TransitionEvent::Fail
            } else {
                TransitionEvent::Complete
            };
            self.finish(i, event, reason);
        }
        self.schedule();
    }

    fn finish(&mut self, idx: usize, event: TransitionEvent, reason: Option<FailureReason>) {
        let now = self.clock();
        let actor = self.actor.clone();
        let job = &mut self.jobs[idx];
        let to = job.state.apply(event, now, &actor).expect("legal terminal transition");
        job.ended = Some(now);
        job.reason = reason.clone();
        job.child = None;
        let id = job.id.clone();
        let (kind, payload) = match to {
            State::Done => (EventKind::JobDone, serde_json::Value::Null),
            State::Failed => (EventKind::JobFailed, json!({ "reason": reason })),
            _ => (EventKind::JobCanceled, serde_json::Value::Null),
        };
        self.record(&id, kind, payload);
    }

    fn schedule(&mut self) {
        let now = self.clock();
        let running: Vec<RunningJob> = self.running_profile();
        let waiting = self.waiting_profile();
        let pass = easy_pass(now, self.model.total_cores, &running, &waiting);
        let started: Vec<(usize, bool)> = pass.started.iter().map(|&(p, bf)| (self.queue[p], bf)).collect();
        for (idx, backfill) in started {
            self.queue.retain(|&q| q != idx);
            self.launch(idx, backfill);
        }
    }

    fn launch(&mut self, idx: usize, backfill: bool) {
        let now = self.clock();
        let actor = self.actor.clone();
        let job = &mut self.jobs[idx];
        job.state.apply(TransitionEvent::Run, now, &actor).expect("queued job can run");
        job.started = Some(now);
        let spawned = Command::new(&job.desc.executable)
            .args(&job.desc.arguments)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn();
        let id = job.id.clone();
        let wait = now - job.submitted;
        debug!("{id}: launching {}", job.desc.executable);
        match spawned {
            Ok(child) => {
                job.child = Some(child);
                self.running.push(idx);
                self.record(&id, EventKind::JobStarted, json!({ "backfill": backfill, "wait": wait }));
            }
            Err(e) => {
                self.record(&id, EventKind::JobStarted, json!({ "backfill": backfill, "wait": wait }));
                self.finish(idx, TransitionEvent::Fail, Some(FailureReason::Spawn(e.to_string())));
            }
        }
    }

    fn running_profile(&self) -> Vec<RunningJob> {
        self.running
            .iter()
            .map(|&i| RunningJob {
                cores: self.jobs[i].desc.cores,
                expected_end: self.jobs[i].started.unwrap_or(0.0) + self.jobs[i].desc.walltime_limit,
            })
            .collect()
    }

    fn waiting_profile(&self) -> Vec<WaitingJob> {
        self.queue
            .iter()
            .map(|&i| WaitingJob {
                cores: self.jobs[i].desc.cores,
                walltime: self.jobs[i].desc.walltime_limit,
                backfill: self.backfill_allowed(&self.jobs[i].desc.queue_name),
            })
            .collect()
    }

    fn lookup(&self, job_id: &str) -> Result<usize, ResourceError> {
        self.index
            .get(job_id)
            .copied()
            .ok_or_else(|| ResourceError::UnknownJob(job_id.to_string()))
    }
}

impl Backend for LocalBackend {
    fn resource_id(&self) -> &str {
        &self.model.resource_id
    }

    fn now(&self) -> f64 {
        self.clock()
    }

    fn submit_job(&mut self, jd: JobDescription) -> Result<String, ResourceError> {
        self.model.check_job(&jd)?;
        self.poll();
        let now = self.clock();
        let idx = self.jobs.len();
        let id = format!("{}.job.{idx:06}", self.model.resource_id);
        let mut state = EntityState::new(EntityKind::Job, now, &self.actor);
        state.apply(TransitionEvent::Enqueue, now, &self.actor)?;
        let payload = json!({
            "resource": self.model.resource_id,
            "cores": jd.cores,
            "walltime": jd.walltime_limit,
            "queue": jd.queue_name,
            "origin": jd.origin,
        });
        self.jobs.push(LocalJob {
            id: id.clone(),
            desc: jd,
            state,
            reason: None,
            submitted: now,
            started: None,
            ended: None,
            child: None,
        });
        self.index.insert(id.clone(), idx);
        self.queue.push(idx);
        self.record(&id, EventKind::JobQueued, payload);
        self.schedule();
        Ok(id)
    }

    fn job_state(&self, job_id: &str) -> Result<JobStatus, ResourceError> {
        let job = &self.jobs[self.lookup(job_id)?];
        Ok(JobStatus {
            state: job.state.current(),
            reason: job.reason.clone(),
            submitted: job.submitted,
            started: job.started,
            ended: job.ended,
        })
    }

    fn cancel_job(&mut self, job_id: &str) -> Result<(), ResourceError> {
        let idx = self.lookup(job_id)?;
        self.poll();
        let current = self.jobs[idx].state.current();
        if current.is_terminal() {
            return Err(StateError::IllegalTransition {
                kind: EntityKind::Job,
                from: current,
                event: TransitionEvent::Cancel,
            }
            .into());
        }
        if let Some(child) = self.jobs[idx].child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
        self.queue.retain(|&q| q != idx);
        self.running.retain(|&r| r != idx);
        self.finish(idx, TransitionEvent::Cancel, None);
        self.schedule();
        Ok(())
    }

    fn estimate_queue_wait(&self, jd: &JobDescription) -> Result<f64, ResourceError> {
        self.model.check_job(jd)?;
        let now = self.clock();
        let running = self.running_profile();
        let mut waiting = self.waiting_profile();
        waiting.push(WaitingJob {
            cores: jd.cores,
            walltime: jd.walltime_limit,
            backfill: self.backfill_allowed(&jd.queue_name),
        });
        let target = waiting.len() - 1;
        Ok((replay_start(now, self.model.total_cores, &running, &waiting, target) - now).max(0.0))
    }

    fn step_queue(&mut self, until: f64) -> Vec<Event> {
        let before = self.log.len();
        loop {
            self.poll();
            if self.clock() >= until {
                break;
            }
            std::thread::sleep(POLL);
        }
        self.log.events()[before..].to_vec()
    }

    fn queue_len(&self) -> usize {
        self.queue.len()
    }
}

impl Drop for LocalBackend {
    fn drop(&mut self) {
        for job in &mut self.jobs {
            if let Some(child) = job.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}
