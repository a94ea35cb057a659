//! Pattern expanders.

use std::collections::BTreeSet;

use blockflow_core::{validate_dag, ExecutionReport, TaskDescription, WorkflowDag, WorkflowExecutor};

use crate::error::EnsembleError;
use crate::pattern::{PatternSpec, Pipeline, TaskTemplate};

/// Chooses which replicas exchange after a given cycle.
pub trait Pairing {
    fn pairs(&self, cycle: usize, n_replicas: usize) -> Vec<(usize, usize)>;
}

/// Nearest neighbours, (0,1),(2,3),... on even cycles and (1,2),(3,4),...
/// on odd ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvenOddPairing;

impl Pairing for EvenOddPairing {
    fn pairs(&self, cycle: usize, n_replicas: usize) -> Vec<(usize, usize)> {
        let first = cycle % 2;
        (first..n_replicas.saturating_sub(1)).step_by(2).map(|a| (a, a + 1)).collect()
    }
}

/// Number of exchanges [`EvenOddPairing`] schedules after `cycle`.
pub fn pair_count(cycle: usize, n_replicas: usize) -> usize {
    if cycle % 2 == 0 {
        n_replicas / 2
    } else {
        n_replicas.saturating_sub(1) / 2
    }
}

fn all_edges(from: &[String], to: &[String], edges: &mut Vec<(String, String)>) {
    for a in from {
        for b in to {
            edges.push((a.clone(), b.clone()));
        }
    }
}

fn require(cond: bool, what: &str) -> Result<(), EnsembleError> {
    if cond {
        Ok(())
    } else {
        Err(EnsembleError::InvalidSpec(what.to_string()))
    }
}

pub fn expand(spec: &PatternSpec) -> Result<WorkflowDag, EnsembleError> {
    match spec {
        PatternSpec::SimulationAnalysis {
            n_sim,
            n_analysis,
            iterations,
            simulation,
            analysis,
        } => expand_simulation_analysis(*n_sim, *n_analysis, *iterations, simulation, analysis),
        PatternSpec::ReplicaExchange {
            n_replicas,
            n_cycles,
            md,
            exchange,
        } => expand_replica_exchange(*n_replicas, *n_cycles, md, exchange, &EvenOddPairing),
        PatternSpec::ConcurrentPipelines { pipelines, sync_points } => expand_concurrent_pipelines(pipelines, sync_points),
    }
}

/// `iterations` rounds of `n_sim` simulations followed by `n_analysis`
/// analyses; each stage waits for the whole previous one.
pub fn expand_simulation_analysis(
    n_sim: usize,
    n_analysis: usize,
    iterations: usize,
    simulation: &TaskTemplate,
    analysis: &TaskTemplate,
) -> Result<WorkflowDag, EnsembleError> {
    require(n_sim >= 1, "n_sim must be at least 1")?;
    require(n_analysis >= 1, "n_analysis must be at least 1")?;
    require(iterations >= 1, "iterations must be at least 1")?;
    let mut tasks = Vec::with_capacity(iterations * (n_sim + n_analysis));
    let mut edges = Vec::new();
    let mut previous: Vec<String> = Vec::new();
    for it in 0..iterations {
        let sims: Vec<String> = (0..n_sim).map(|k| format!("it{it:03}.sim{k:04}")).collect();
        let anas: Vec<String> = (0..n_analysis).map(|k| format!("it{it:03}.ana{k:04}")).collect();
        tasks.extend(sims.iter().map(|id| simulation.instantiate(id.clone())));
        tasks.extend(anas.iter().map(|id| analysis.instantiate(id.clone())));
        all_edges(&previous, &sims, &mut edges);
        all_edges(&sims, &anas, &mut edges);
        previous = anas;
    }
    Ok(WorkflowDag::from_parts(tasks, edges)?)
}

fn md_id(cycle: usize, replica: usize) -> String {
    format!("c{cycle:03}.md{replica:03}")
}

fn exchange_id(cycle: usize, a: usize, b: usize) -> String {
    format!("c{cycle:03}.ex{a:03}-{b:03}")
}

/// `n_cycles` of one MD task per replica followed by the exchanges chosen by
/// `pairing`. A replica's next MD task waits for the exchange it took part
/// in, or for its own MD task when it sat the cycle out.
pub fn expand_replica_exchange(
    n_replicas: usize,
    n_cycles: usize,
    md: &TaskTemplate,
    exchange: &TaskTemplate,
    pairing: &dyn Pairing,
) -> Result<WorkflowDag, EnsembleError> {
    require(n_replicas >= 2, "n_replicas must be at least 2")?;
    require(n_cycles >= 1, "n_cycles must be at least 1")?;
    let mut tasks = Vec::new();
    let mut edges = Vec::new();
    // what each replica's next MD task has to wait for
    let mut gate: Vec<Option<String>> = vec![None; n_replicas];
    for cycle in 0..n_cycles {
        for (r, g) in gate.iter_mut().enumerate() {
            let id = md_id(cycle, r);
            tasks.push(md.instantiate(id.clone()));
            if let Some(prev) = g.take() {
                edges.push((prev, id.clone()));
            }
            *g = Some(id);
        }
        let mut touched = BTreeSet::new();
        for (a, b) in pairing.pairs(cycle, n_replicas) {
            if a == b || a >= n_replicas || b >= n_replicas || !touched.insert(a) || !touched.insert(b) {
                return Err(EnsembleError::InvalidSpec(format!("pairing produced invalid pair ({a}, {b})")));
            }
            let id = exchange_id(cycle, a, b);
            tasks.push(exchange.instantiate(id.clone()));
            edges.push((md_id(cycle, a), id.clone()));
            edges.push((md_id(cycle, b), id.clone()));
            gate[a] = Some(id.clone());
            gate[b] = Some(id);
        }
    }
    Ok(WorkflowDag::from_parts(tasks, edges)?)
}

/// Pipelines run side by side; each sync point is a barrier across all of
/// them.
pub fn expand_concurrent_pipelines(pipelines: &[Pipeline], sync_points: &[usize]) -> Result<WorkflowDag, EnsembleError> {
    require(!pipelines.is_empty(), "at least one pipeline is required")?;
    for p in pipelines {
        require(!p.stages.is_empty(), &format!("pipeline {} has no stages", p.pipeline_id))?;
        for s in &p.stages {
            require(
                !s.tasks.is_empty(),
                &format!("stage {} of pipeline {} has no tasks", s.stage_id, p.pipeline_id),
            )?;
        }
    }
    let shortest = pipelines.iter().map(|p| p.stages.len()).min().unwrap_or(0);
    for &point in sync_points {
        if point == 0 || point >= shortest {
            return Err(EnsembleError::BadSyncPoint { point, stages: shortest });
        }
    }

    let ids = |p: &Pipeline, s: usize| -> Vec<String> { p.stages[s].tasks.iter().map(|t| t.task_id.clone()).collect() };
    let mut tasks: Vec<TaskDescription> = Vec::new();
    let mut edges = Vec::new();
    for p in pipelines {
        for (s, stage) in p.stages.iter().enumerate() {
            tasks.extend(stage.tasks.iter().cloned());
            if s > 0 {
                all_edges(&ids(p, s - 1), &ids(p, s), &mut edges);
            }
        }
    }
    let points: BTreeSet<usize> = sync_points.iter().copied().collect();
    for point in points {
        let before: Vec<String> = pipelines.iter().flat_map(|p| ids(p, point - 1)).collect();
        for p in pipelines {
            all_edges(&before, &ids(p, point), &mut edges);
        }
    }
    Ok(WorkflowDag::from_parts(tasks, edges)?)
}

/// Expands, validates and hands the workflow to `executor`.
pub fn execute_pattern(spec: &PatternSpec, executor: &mut dyn WorkflowExecutor) -> Result<ExecutionReport, EnsembleError> {
    let dag = expand(spec)?;
    validate_dag(&dag)?;
    Ok(executor.execute(&dag)?)
}
