//! Pattern and pipeline types.

use blockflow_core::TaskDescription;
use serde::{Deserialize, Serialize};

/// The program run by every task of one role in a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub executable: String,
    #[serde(default)]
    pub arguments: Vec<String>,
    #[serde(default = "one")]
    pub cores: u32,
    pub runtime: f64,
}

fn one() -> u32 {
    1
}

impl TaskTemplate {
    pub fn new(executable: impl Into<String>, runtime: f64) -> Self {
        Self {
            executable: executable.into(),
            arguments: Vec::new(),
            cores: 1,
            runtime,
        }
    }

    pub fn with_cores(mut self, cores: u32) -> Self {
        self.cores = cores;
        self
    }

    pub(crate) fn instantiate(&self, task_id: String) -> TaskDescription {
        let mut t = TaskDescription::new(task_id, self.executable.clone(), self.runtime).with_arguments(self.arguments.clone());
        if self.cores > 1 {
            t = t.mpi(self.cores);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub stage_id: String,
    pub tasks: Vec<TaskDescription>,
}

/// Stages run strictly in order; tasks inside a stage are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub pipeline_id: String,
    pub stages: Vec<Stage>,
}

impl Pipeline {
    pub fn new(pipeline_id: impl Into<String>) -> Self {
        Self {
            pipeline_id: pipeline_id.into(),
            stages: Vec::new(),
        }
    }

    pub fn stage(mut self, stage_id: impl Into<String>, tasks: Vec<TaskDescription>) -> Self {
        self.stages.push(Stage {
            stage_id: stage_id.into(),
            tasks,
        });
        self
    }
}

/// A pre-determined ensemble execution pattern.
///
/// Sync points are 1-based stage numbers: a sync point `s` makes stage
/// `s + 1` of every pipeline wait for stage `s` of all pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternSpec {
    SimulationAnalysis {
        n_sim: usize,
        n_analysis: usize,
        iterations: usize,
        #[serde(default = "default_sim")]
        simulation: TaskTemplate,
        #[serde(default = "default_analysis")]
        analysis: TaskTemplate,
    },
    ReplicaExchange {
        n_replicas: usize,
        n_cycles: usize,
        #[serde(default = "default_md")]
        md: TaskTemplate,
        #[serde(default = "default_exchange")]
        exchange: TaskTemplate,
    },
    ConcurrentPipelines {
        pipelines: Vec<Pipeline>,
        #[serde(default)]
        sync_points: Vec<usize>,
    },
}

fn default_sim() -> TaskTemplate {
    TaskTemplate::new("simulate", 100.0)
}

fn default_analysis() -> TaskTemplate {
    TaskTemplate::new("analyze", 20.0)
}

fn default_md() -> TaskTemplate {
    TaskTemplate::new("md", 100.0)
}

fn default_exchange() -> TaskTemplate {
    TaskTemplate::new("exchange", 5.0)
}

impl PatternSpec {
    pub fn simulation_analysis(n_sim: usize, n_analysis: usize, iterations: usize) -> Self {
        Self::SimulationAnalysis {
            n_sim,
            n_analysis,
            iterations,
            simulation: default_sim(),
            analysis: default_analysis(),
        }
    }

    pub fn replica_exchange(n_replicas: usize, n_cycles: usize) -> Self {
        Self::ReplicaExchange {
            n_replicas,
            n_cycles,
            md: default_md(),
            exchange: default_exchange(),
        }
    }

    pub fn concurrent_pipelines(pipelines: Vec<Pipeline>, sync_points: Vec<usize>) -> Self {
        Self::ConcurrentPipelines { pipelines, sync_points }
    }
}
