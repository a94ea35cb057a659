//! Resource descriptions and synthetic background load.

use std::path::Path;

use blockflow_core::{Connectivity, JobDescription, JobOrigin, QueueInfo, ResourceError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "FCFS")]
    Fcfs,
    #[serde(rename = "FCFS_BACKFILL")]
    FcfsBackfill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSpec {
    pub name: String,
    pub max_walltime: f64,
    pub policy: Policy,
}

/// A competing job: `(arrival_time, cores, duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry(pub f64, pub u32, pub f64);

impl TraceEntry {
    pub fn arrival(&self) -> f64 {
        self.0
    }
    pub fn cores(&self) -> u32 {
        self.1
    }
    pub fn duration(&self) -> f64 {
        self.2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub resource_id: String,
    pub total_cores: u32,
    pub queues: Vec<QueueSpec>,
    #[serde(rename = "trace", alias = "background_load_trace", default)]
    pub background_load_trace: Vec<TraceEntry>,
    #[serde(default)]
    pub connectivity: Connectivity,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid resource model `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse resource model: {0}")]
    Parse(#[from] serde_json::Error),
}

impl ResourceModel {
    /// One-queue model with no background load.
    pub fn single_queue(resource_id: impl Into<String>, total_cores: u32, max_walltime: f64, policy: Policy) -> Self {
        Self {
            resource_id: resource_id.into(),
            total_cores,
            queues: vec![QueueSpec {
                name: "batch".into(),
                max_walltime,
                policy,
            }],
            background_load_trace: Vec::new(),
            connectivity: Connectivity::Full,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: ResourceModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::Invalid {
            id: self.resource_id.clone(),
            reason,
        };
        if self.resource_id.is_empty() {
            return Err(invalid("empty resource_id".into()));
        }
        if self.total_cores == 0 {
            return Err(invalid("total_cores must be positive".into()));
        }
        if self.queues.is_empty() {
            return Err(invalid("at least one queue is required".into()));
        }
        for (i, q) in self.queues.iter().enumerate() {
            if !(q.max_walltime > 0.0) {
                return Err(invalid(format!("queue `{}` has non-positive max_walltime", q.name)));
            }
            if self.queues[..i].iter().any(|o| o.name == q.name) {
                return Err(invalid(format!("duplicate queue `{}`", q.name)));
            }
        }
        for e in &self.background_load_trace {
            if e.cores() == 0 || e.cores() > self.total_cores {
                return Err(invalid(format!("trace entry with {} cores", e.cores())));
            }
            if !(e.duration() > 0.0) || !(e.arrival() >= 0.0) {
                return Err(invalid(format!("trace entry {e:?} has bad timing")));
            }
        }
        Ok(())
    }

    pub fn queue(&self, name: &str) -> Option<&QueueSpec> {
        self.queues.iter().find(|q| q.name == name)
    }

    /// Queue with the largest walltime limit (first one on ties).
    pub fn longest_queue(&self) -> &QueueSpec {
        self.queues
            .iter()
            .reduce(|best, q| if q.max_walltime > best.max_walltime { q } else { best })
            .expect("validated model has a queue")
    }

    pub fn queue_infos(&self) -> Vec<QueueInfo> {
        self.queues
            .iter()
            .map(|q| QueueInfo {
                name: q.name.clone(),
                max_walltime: q.max_walltime,
            })
            .collect()
    }

    /// Check a job against this resource's limits.
    pub fn check_job(&self, jd: &JobDescription) -> Result<&QueueSpec, ResourceError> {
        if jd.cores == 0 {
            return Err(ResourceError::InvalidJob("cores must be positive".into()));
        }
        if !(jd.walltime_limit > 0.0) || !jd.walltime_limit.is_finite() {
            return Err(ResourceError::InvalidJob("walltime_limit must be positive".into()));
        }
        if jd.cores > self.total_cores {
            return Err(ResourceError::OversizedJob {
                resource: self.resource_id.clone(),
                requested: jd.cores,
                available: self.total_cores,
            });
        }
        let queue = self
            .queue(&jd.queue_name)
            .ok_or_else(|| ResourceError::UnknownQueue(jd.queue_name.clone()))?;
        if jd.walltime_limit > queue.max_walltime {
            return Err(ResourceError::WalltimeExceedsQueueLimit {
                queue: queue.name.clone(),
                requested: jd.walltime_limit,
                limit: queue.max_walltime,
            });
        }
        Ok(queue)
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        for q in &mut self.queues {
            q.policy = policy;
        }
        self
    }

    /// Job representing a trace entry; walltime equals its duration.
    pub(crate) fn background_job(&self, entry: &TraceEntry) -> JobDescription {
        JobDescription {
            cores: entry.cores(),
            walltime_limit: entry.duration(),
            executable: "background".into(),
            arguments: Vec::new(),
            queue_name: self.queues[0].name.clone(),
            project: "background".into(),
            runtime: Some(entry.duration()),
            origin: JobOrigin::Background,
        }
    }
}

/// Parameters of a seeded synthetic background workload.
///
/// Arrivals are Poisson with the rate that makes the offered load
/// `target_load` of the machine; sizes and durations are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundLoad {
    pub target_load: f64,
    pub horizon: f64,
    pub min_cores: u32,
    pub max_cores: u32,
    pub min_duration: f64,
    pub max_duration: f64,
    /// Cores are rounded up to a multiple of this (node size).
    #[serde(default = "one")]
    pub granularity: u32,
    /// Start with the machine already loaded to `target_load`.
    #[serde(default = "yes")]
    pub prefill: bool,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl BackgroundLoad {
    pub fn generate(&self, total_cores: u32, seed: u64) -> Vec<TraceEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gran = self.granularity.max(1);
        let max_cores = self.max_cores.min(total_cores).max(1);
        let min_cores = self.min_cores.clamp(1, max_cores);
        let sample_cores = |rng: &mut ChaCha8Rng| {
            let c = rng.gen_range(min_cores..=max_cores);
            (c.div_ceil(gran) * gran).min(total_cores)
        };
        let sample_duration = |rng: &mut ChaCha8Rng| {
            if self.max_duration > self.min_duration {
                rng.gen_range(self.min_duration..self.max_duration)
            } else {
                self.min_duration
            }
        };

        let mut trace = Vec::new();
        if self.prefill {
            let target = (self.target_load * f64::from(total_cores)) as u64;
            let mut busy = 0u64;
            while busy < target {
                let room = (target - busy).min(u64::from(total_cores)) as u32;
                let c = sample_cores(&mut rng).min(room.max(1));
                // already-running jobs have a uniformly distributed remainder
                let d = sample_duration(&mut rng) * rng.gen_range(0.05..1.0);
                trace.push(TraceEntry(0.0, c, d));
                busy += u64::from(c);
            }
        }

        let mean_cores = f64::from(min_cores + max_cores) / 2.0;
        let mean_duration = (self.min_duration + self.max_duration) / 2.0;
        let rate = self.target_load * f64::from(total_cores) / (mean_cores * mean_duration);
        if rate > 0.0 && rate.is_finite() {
            let mut t = 0.0;
            loop {
                let u: f64 = rng.gen();
                t += -(1.0 - u).ln() / rate;
                if t >= self.horizon {
                    break;
                }
                let c = sample_cores(&mut rng);
                let d = sample_duration(&mut rng);
                trace.push(TraceEntry(t, c, d));
            }
        }
        trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_uses_trace_key() {
        let m = ResourceModel::from_json(
            r#"{"resource_id":"r1","total_cores":100,
                "queues":[{"name":"batch","max_walltime":3600,"policy":"FCFS_BACKFILL"}],
                "trace":[[0,10,60],[5.5,20,30]]}"#,
        )
        .unwrap();
        assert_eq!(m.background_load_trace.len(), 2);
        assert_eq!(m.background_load_trace[1], TraceEntry(5.5, 20, 30.0));
        assert_eq!(m.connectivity, Connectivity::Full);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""trace":[[0.0,10,60.0],[5.5,20,30.0]]"#));
    }

    #[test]
    fn oversized_trace_rejected() {
        let mut m = ResourceModel::single_queue("r", 10, 100.0, Policy::Fcfs);
        m.background_load_trace.push(TraceEntry(0.0, 11, 1.0));
        assert!(m.validate().is_err());
    }

    #[test]
    fn job_checks() {
        let m = ResourceModel::single_queue("r", 100, 3600.0, Policy::Fcfs);
        assert!(matches!(m.check_job(&JobDescription::new(200, 10.0, "batch")), Err(ResourceError::OversizedJob { .. })));
        assert!(matches!(m.check_job(&JobDescription::new(1, 10.0, "debug")), Err(ResourceError::UnknownQueue(_))));
        assert!(matches!(
            m.check_job(&JobDescription::new(1, 7200.0, "batch")),
            Err(ResourceError::WalltimeExceedsQueueLimit { .. })
        ));
        assert!(m.check_job(&JobDescription::new(100, 3600.0, "batch")).is_ok());
    }

    #[test]
    fn background_load_hits_target_on_average() {
        let spec = BackgroundLoad {
            target_load: 0.9,
            horizon: 30.0 * 86400.0,
            min_cores: 1000,
            max_cores: 50000,
            min_duration: 3600.0,
            max_duration: 6.0 * 3600.0,
            granularity: 16,
            prefill: false,
        };
        let trace = spec.generate(300_000, 11);
        assert_eq!(trace, spec.generate(300_000, 11));
        let offered: f64 = trace.iter().map(|e| f64::from(e.cores()) * e.duration()).sum();
        let load = offered / (300_000.0 * spec.horizon);
        assert!((load - 0.9).abs() < 0.1, "offered load {load}");
        assert!(trace.iter().all(|e| e.cores() % 16 == 0 && e.cores() <= 300_000));
        assert!(trace.windows(2).all(|w| w[0].arrival() <= w[1].arrival()));
    }
}
