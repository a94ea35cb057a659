//! Thread-owned backend reachable through a cloneable handle.

use std::sync::mpsc::{channel, Sender};
use std::thread::JoinHandle;
use std::sync::Arc;

use blockflow_core::{Event, JobDescription, ResourceError};

use crate::backend::{Backend, JobStatus};

type Reply<T> = Sender<T>;

enum Command {
    Submit(JobDescription, Reply<Result<String, ResourceError>>),
    State(String, Reply<Result<JobStatus, ResourceError>>),
    Cancel(String, Reply<Result<(), ResourceError>>),
    Estimate(JobDescription, Reply<Result<f64, ResourceError>>),
    Step(f64, Reply<Vec<Event>>),
    Now(Reply<f64>),
    QueueLen(Reply<usize>),
}

struct Worker {
    tx: Sender<Command>,
    thread: Option<JoinHandle<()>>,
}

impl Drop for Worker {
    fn drop(&mut self) {
        // closing the channel ends the loop
        let (dead, _) = channel();
        self.tx = dead;
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// A backend running on its own thread. Requests are processed one at a
/// time in arrival order; clones share the same backend.
#[derive(Clone)]
pub struct ResourceHandle {
    resource_id: String,
    tx: Sender<Command>,
    _worker: Arc<Worker>,
}

impl ResourceHandle {
    pub fn spawn(backend: Box<dyn Backend>) -> Self {
        let resource_id = backend.resource_id().to_string();
        let (tx, rx) = channel::<Command>();
        let thread = std::thread::Builder::new()
            .name(format!("resource-{resource_id}"))
            .spawn(move || {
                let mut backend = backend;
                for cmd in rx {
                    match cmd {
                        Command::Submit(jd, r) => drop(r.send(backend.submit_job(jd))),
                        Command::State(id, r) => drop(r.send(backend.job_state(&id))),
                        Command::Cancel(id, r) => drop(r.send(backend.cancel_job(&id))),
                        Command::Estimate(jd, r) => drop(r.send(backend.estimate_queue_wait(&jd))),
                        Command::Step(t, r) => drop(r.send(backend.step_queue(t))),
                        Command::Now(r) => drop(r.send(backend.now())),
                        Command::QueueLen(r) => drop(r.send(backend.queue_len())),
                    }
                }
            })
            .expect("spawn resource thread");
        let worker = Worker {
            tx: tx.clone(),
            thread: Some(thread),
        };
        Self {
            resource_id,
            tx,
            _worker: Arc::new(worker),
        }
    }

    fn ask<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ResourceError> {
        let (reply, rx) = channel();
        self.tx
            .send(make(reply))
            .map_err(|_| ResourceError::Unavailable(self.resource_id.clone()))?;
        rx.recv().map_err(|_| ResourceError::Unavailable(self.resource_id.clone()))
    }

    pub fn resource_id(&self) -> &str {
        &self.resource_id
    }

    pub fn submit_job(&self, jd: JobDescription) -> Result<String, ResourceError> {
        self.ask(|r| Command::Submit(jd, r))?
    }

    pub fn job_state(&self, job_id: &str) -> Result<JobStatus, ResourceError> {
        self.ask(|r| Command::State(job_id.to_string(), r))?
    }

    pub fn cancel_job(&self, job_id: &str) -> Result<(), ResourceError> {
        self.ask(|r| Command::Cancel(job_id.to_string(), r))?
    }

    pub fn estimate_queue_wait(&self, jd: &JobDescription) -> Result<f64, ResourceError> {
        self.ask(|r| Command::Estimate(jd.clone(), r))?
    }

    pub fn step_queue(&self, until: f64) -> Result<Vec<Event>, ResourceError> {
        self.ask(|r| Command::Step(until, r))
    }

    pub fn now(&self) -> Result<f64, ResourceError> {
        self.ask(Command::Now)
    }

    pub fn queue_len(&self) -> Result<usize, ResourceError> {
        self.ask(Command::QueueLen)
    }
}
