use blockflow_core::{
    dag_requirements, EventLog, ExecutionReport, ExecutorError, ResourceConnector, TaskDescription, WorkflowDag,
    WorkflowExecutor,
};
use blockflow_pilot::{Fault, Perturbation, PilotSession};
use blockflow_resource::{ResourceModel, SimBatch};

use crate::enact::{enact, EnactOptions};
use crate::error::WlmsError;
use crate::strategy::{derive_strategy, ExecutionStrategy, StrategyConfig};

/// Full-stack executor over simulated resources: plan, acquire pilots,
/// enact. Each `execute` starts from fresh copies of the resource models.
#[derive(Debug, Clone)]
pub struct SimulatedWlms {
    pub models: Vec<ResourceModel>,
    pub config: StrategyConfig,
    pub options: EnactOptions,
    pub faults: Vec<Fault>,
    pub perturbation: Option<Perturbation>,
    last_log: EventLog,
    last_strategy: Option<ExecutionStrategy>,
}

impl SimulatedWlms {
    pub fn new(models: Vec<ResourceModel>) -> Self {
        Self {
            models,
            config: StrategyConfig::default(),
            options: EnactOptions::default(),
            faults: Vec::new(),
            perturbation: None,
            last_log: EventLog::new(),
            last_strategy: None,
        }
    }

    pub fn with_config(mut self, config: StrategyConfig) -> Self {
        self.config = config;
        self
    }

    /// Event log of the most recent run.
    pub fn log(&self) -> &EventLog {
        &self.last_log
    }

    pub fn strategy(&self) -> Option<&ExecutionStrategy> {
        self.last_strategy.as_ref()
    }

    /// Plans for `dag` with the critical path as the pilot duration floor.
    pub fn plan(&self, dag: &WorkflowDag) -> Result<ExecutionStrategy, WlmsError> {
        let reqs = dag_requirements(dag);
        let tasks: Vec<TaskDescription> = dag.tasks.values().cloned().collect();
        let mut config = self.config.clone();
        config.duration_floor = config.duration_floor.max(dag.critical_path());
        derive_strategy(&reqs, &tasks, &self.models, &config)
    }

    pub fn run(&mut self, dag: &WorkflowDag) -> Result<ExecutionReport, WlmsError> {
        self.last_log = EventLog::new();
        if dag.is_empty() {
            return Ok(ExecutionReport::default());
        }
        let strategy = self.plan(dag)?;
        let mut session = PilotSession::new().with_faults(self.faults.clone());
        if let Some(p) = self.perturbation {
            session = session.with_perturbation(p);
        }
        for model in &self.models {
            let sim = SimBatch::new(model.clone()).map_err(|e| WlmsError::Model(e.to_string()))?;
            session.add_connector(Box::new(sim) as Box<dyn ResourceConnector>)?;
        }
        let result = enact(&mut session, &strategy, dag, &self.options);
        self.last_strategy = Some(strategy);
        self.last_log = session.into_log();
        result
    }
}

impl WorkflowExecutor for SimulatedWlms {
    fn execute(&mut self, dag: &WorkflowDag) -> Result<ExecutionReport, ExecutorError> {
        self.run(dag).map_err(|e| match e {
            WlmsError::ExecutionFailed { task_ids, report } => ExecutorError::Failed { task_ids, report },
            other => ExecutorError::Rejected(other.to_string()),
        })
    }
}
