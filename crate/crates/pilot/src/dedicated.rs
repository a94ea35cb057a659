//! A minimal dedicated machine: no competing load, strict FIFO, an optional
//! fixed start-up delay. Lets the pilot runtime run without any other
//! resource layer.

use std::collections::VecDeque;

use blockflow_core::{
    FailureReason, JobDescription, PlaceholderUpdate, QueueInfo, ResourceConnector, ResourceError, State, StateError,
    EntityKind, TransitionEvent,
};

#[derive(Debug, Clone)]
struct Job {
    desc: JobDescription,
    state: State,
    /// Earliest start (submission plus start-up delay).
    ready: f64,
    end: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DedicatedConnector {
    resource_id: String,
    total_cores: u32,
    max_walltime: f64,
    startup_delay: f64,
    now: f64,
    jobs: Vec<Job>,
    waiting: VecDeque<usize>,
    updates: Vec<PlaceholderUpdate>,
}

impl DedicatedConnector {
    /// One queue named `batch`.
    pub fn new(resource_id: impl Into<String>, total_cores: u32, max_walltime: f64) -> Self {
        Self {
            resource_id: resource_id.into(),
            total_cores,
            max_walltime,
            startup_delay: 0.0,
            now: 0.0,
            jobs: Vec::new(),
            waiting: VecDeque::new(),
            updates: Vec::new(),
        }
    }

    pub fn with_startup_delay(mut self, delay: f64) -> Self {
        self.startup_delay = delay;
        self
    }

    fn used(&self) -> u32 {
        self.jobs
            .iter()
            .filter(|j| j.state == State::Running)
            .map(|j| j.desc.cores)
            .sum()
    }

    fn start_ready(&mut self) {
        while let Some(&i) = self.waiting.front() {
            let job = &self.jobs[i];
            if job.ready > self.now || job.desc.cores > self.total_cores - self.used() {
                break;
            }
            self.waiting.pop_front();
            let run = self.jobs[i].desc.runtime.unwrap_or(self.jobs[i].desc.walltime_limit);
            let job = &mut self.jobs[i];
            job.state = State::Running;
            job.end = Some(self.now + run.min(job.desc.walltime_limit));
            self.updates.push(update(i, self.now, State::Running, None));
        }
    }

    fn finish_due(&mut self) {
        for i in 0..self.jobs.len() {
            let job = &mut self.jobs[i];
            if job.state == State::Running && job.end.is_some_and(|e| e <= self.now) {
                let overran = job.desc.runtime.is_some_and(|r| r > job.desc.walltime_limit);
                let (state, reason) = if overran {
                    (State::Failed, Some(FailureReason::Walltime))
                } else {
                    (State::Done, None)
                };
                job.state = state;
                self.updates.push(update(i, self.now, state, reason));
            }
        }
    }
}

fn update(i: usize, time: f64, state: State, reason: Option<FailureReason>) -> PlaceholderUpdate {
    PlaceholderUpdate {
        job_id: format!("job.{i}"),
        time,
        state,
        reason,
    }
}

impl ResourceConnector for DedicatedConnector {
    fn resource_id(&self) -> &str {
        &self.resource_id
    }

    fn total_cores(&self) -> u32 {
        self.total_cores
    }

    fn queues(&self) -> Vec<QueueInfo> {
        vec![QueueInfo {
            name: "batch".into(),
            max_walltime: self.max_walltime,
        }]
    }

    fn now(&self) -> f64 {
        self.now
    }

    fn submit(&mut self, jd: JobDescription) -> Result<String, ResourceError> {
        if jd.cores == 0 || !(jd.walltime_limit > 0.0) {
            return Err(ResourceError::InvalidJob("cores and walltime must be positive".into()));
        }
        if jd.cores > self.total_cores {
            return Err(ResourceError::OversizedJob {
                resource: self.resource_id.clone(),
                requested: jd.cores,
                available: self.total_cores,
            });
        }
        if jd.queue_name != "batch" {
            return Err(ResourceError::UnknownQueue(jd.queue_name));
        }
        if jd.walltime_limit > self.max_walltime {
            return Err(ResourceError::WalltimeExceedsQueueLimit {
                queue: jd.queue_name,
                requested: jd.walltime_limit,
                limit: self.max_walltime,
            });
        }
        let i = self.jobs.len();
        self.jobs.push(Job {
            desc: jd,
            state: State::Queued,
            ready: self.now + self.startup_delay,
            end: None,
        });
        self.waiting.push_back(i);
        self.start_ready();
        Ok(format!("job.{i}"))
    }

    fn cancel(&mut self, job_id: &str) -> Result<(), ResourceError> {
        let i: usize = job_id
            .strip_prefix("job.")
            .and_then(|n| n.parse().ok())
            .filter(|&i| i < self.jobs.len())
            .ok_or_else(|| ResourceError::UnknownJob(job_id.to_string()))?;
        let from = self.jobs[i].state;
        if from.is_terminal() {
            return Err(StateError::IllegalTransition {
                kind: EntityKind::Job,
                from,
                event: TransitionEvent::Cancel,
            }
            .into());
        }
        self.jobs[i].state = State::Canceled;
        self.waiting.retain(|&w| w != i);
        self.updates.push(update(i, self.now, State::Canceled, None));
        self.start_ready();
        Ok(())
    }

    fn next_event_time(&self) -> Option<f64> {
        let end = self
            .jobs
            .iter()
            .filter(|j| j.state == State::Running)
            .filter_map(|j| j.end)
            .reduce(f64::min);
        let ready = self.waiting.front().map(|&i| self.jobs[i].ready).filter(|&r| r > self.now);
        [end, ready].into_iter().flatten().reduce(f64::min).map(|t| t.max(self.now))
    }

    fn advance(&mut self, until: f64) -> Vec<PlaceholderUpdate> {
        while let Some(t) = ResourceConnector::next_event_time(self) {
            if t > until {
                break;
            }
            self.now = t;
            self.finish_due();
            self.start_ready();
            if ResourceConnector::next_event_time(self) == Some(t) {
                break;
            }
        }
        self.now = self.now.max(until);
        self.start_ready();
        std::mem::take(&mut self.updates)
    }
}
