//! Planning: resource ranking, pilot sizing and workload partitioning.
//!
//! Everything here is pure. Queue waits are estimated on a fresh simulated
//! copy of each resource model, so planning never touches live resources.

use std::collections::BTreeMap;

use blockflow_core::{JobDescription, PilotDescription, TaskDescription, WorkloadRequirements};
use blockflow_resource::{Backend, ResourceModel, SimBatch};
use serde::{Deserialize, Serialize};

use crate::error::WlmsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    #[default]
    MinTtc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Multiplier on the computed pilot duration.
    pub safety_factor: f64,
    /// How many resources a plan may use at once.
    pub max_resources: usize,
    /// Lower bound on pilot duration, e.g. the workflow's critical path.
    pub duration_floor: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            safety_factor: 1.5,
            max_resources: 2,
            duration_floor: 0.0,
        }
    }
}

/// A feasible resource with the wait a workload-sized probe would see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResource {
    pub resource_id: String,
    pub estimated_wait: f64,
    pub total_cores: u32,
    /// Queue used for pilots: the one with the longest walltime limit.
    pub queue: String,
    pub max_walltime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub resource_id: String,
    pub pilot: PilotDescription,
    pub partition: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionStrategy {
    pub objective: Objective,
    pub bindings: Vec<Binding>,
    /// Estimated queue wait per resource considered.
    pub rationale: BTreeMap<String, f64>,
    /// Every feasible resource, best first; replacement pilots walk it.
    pub ranking: Vec<RankedResource>,
}

impl ExecutionStrategy {
    pub fn partition_of(&self, task_id: &str) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.partition.iter().any(|t| t == task_id))
    }
}

/// Ascending by wait, then by resource id.
pub fn rank_by_wait(mut waits: Vec<(String, f64)>) -> Vec<(String, f64)> {
    waits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    waits
}

fn probe_cores(reqs: &WorkloadRequirements, model: &ResourceModel) -> u32 {
    let want = reqs.max_concurrency_cores.max(u64::from(reqs.largest_task_cores)).max(1);
    want.min(u64::from(model.total_cores)) as u32
}

fn feasible(reqs: &WorkloadRequirements, model: &ResourceModel) -> bool {
    model.total_cores >= reqs.largest_task_cores && model.longest_queue().max_walltime >= reqs.longest_task_runtime
}

/// Ranks resources by the estimated queue wait of a pilot sized to `reqs`.
/// Resources that cannot host the largest or longest task are left out.
pub fn select_resources(
    reqs: &WorkloadRequirements,
    models: &[ResourceModel],
    safety_factor: f64,
) -> Result<Vec<RankedResource>, WlmsError> {
    let mut waits = Vec::new();
    let mut info = BTreeMap::new();
    for model in models.iter().filter(|m| feasible(reqs, m)) {
        let queue = model.longest_queue();
        let cores = probe_cores(reqs, model);
        let span = (reqs.total_core_seconds / f64::from(cores)).max(reqs.longest_task_runtime);
        let walltime = (span * safety_factor).clamp(1.0, queue.max_walltime);
        let sim = SimBatch::new(model.clone()).map_err(|e| WlmsError::Model(e.to_string()))?;
        let wait = sim.estimate_queue_wait(&JobDescription::new(cores, walltime, &queue.name))?;
        waits.push((model.resource_id.clone(), wait));
        info.insert(model.resource_id.clone(), (model.total_cores, queue.name.clone(), queue.max_walltime));
    }
    if waits.is_empty() {
        return Err(WlmsError::NoFeasibleResource {
            cores: reqs.largest_task_cores,
            runtime: reqs.longest_task_runtime,
        });
    }
    Ok(rank_by_wait(waits)
        .into_iter()
        .map(|(id, wait)| {
            let (total_cores, queue, max_walltime) = info[&id].clone();
            RankedResource {
                resource_id: id,
                estimated_wait: wait,
                total_cores,
                queue,
                max_walltime,
            }
        })
        .collect())
}

/// Pilot size for a partition on a resource whose usable width is `cap`.
pub fn size_pilot(cap: u32, partition: &[&TaskDescription], config: &StrategyConfig, max_walltime: f64) -> (u32, f64) {
    let sum_cores: u64 = partition.iter().map(|t| u64::from(t.cores)).sum();
    let cores = (u64::from(cap).min(sum_cores)).max(1) as u32;
    let core_seconds: f64 = partition.iter().map(|t| t.core_seconds()).sum();
    let serial: f64 = partition.iter().map(|t| t.runtime_estimate).sum();
    let mean_cores = sum_cores as f64 / partition.len().max(1) as f64;
    let longest = partition.iter().map(|t| t.runtime_estimate).fold(0.0, f64::max);
    let span = (core_seconds / f64::from(cores))
        .max(serial * mean_cores / f64::from(cores))
        .max(longest)
        .max(config.duration_floor);
    (cores, (span * config.safety_factor).min(max_walltime))
}

pub fn derive_strategy(
    reqs: &WorkloadRequirements,
    workload: &[TaskDescription],
    models: &[ResourceModel],
    config: &StrategyConfig,
) -> Result<ExecutionStrategy, WlmsError> {
    if workload.is_empty() {
        return Err(WlmsError::EmptyWorkload);
    }
    let ranking = select_resources(reqs, models, config.safety_factor)?;
    let k = config.max_resources.max(1).min(ranking.len());
    let chosen = &ranking[..k];
    let caps: Vec<u32> = chosen
        .iter()
        .map(|r| {
            let want = reqs.max_concurrency_cores.max(u64::from(reqs.largest_task_cores)).max(1);
            want.min(u64::from(r.total_cores)) as u32
        })
        .collect();

    let mut order: Vec<&TaskDescription> = workload.iter().collect();
    order.sort_by(|a, b| b.core_seconds().total_cmp(&a.core_seconds()).then_with(|| a.task_id.cmp(&b.task_id)));
    let mut load = vec![0.0f64; k];
    let mut parts: Vec<Vec<&TaskDescription>> = vec![Vec::new(); k];
    for task in order {
        let best = (0..k)
            .filter(|&j| caps[j] >= task.cores)
            .map(|j| (j, chosen[j].estimated_wait + (load[j] + task.core_seconds()) / f64::from(caps[j])))
            .reduce(|a, b| if b.1 < a.1 { b } else { a })
            .map(|(j, _)| j)
            .ok_or(WlmsError::NoFeasibleResource {
                cores: task.cores,
                runtime: task.runtime_estimate,
            })?;
        load[best] += task.core_seconds();
        parts[best].push(task);
    }

    let bindings = chosen
        .iter()
        .zip(parts)
        .zip(&caps)
        .filter(|((_, part), _)| !part.is_empty())
        .map(|((r, mut part), &cap)| {
            part.sort_by(|a, b| a.task_id.cmp(&b.task_id));
            let (cores, duration) = size_pilot(cap, &part, config, r.max_walltime);
            Binding {
                resource_id: r.resource_id.clone(),
                pilot: PilotDescription::new(cores, duration, &r.resource_id, &r.queue),
                partition: part.iter().map(|t| t.task_id.clone()).collect(),
            }
        })
        .collect();
    Ok(ExecutionStrategy {
        objective: Objective::MinTtc,
        bindings,
        rationale: ranking.iter().map(|r| (r.resource_id.clone(), r.estimated_wait)).collect(),
        ranking,
    })
}
