//! Ensemble patterns expressed as pipelines of stages and expanded into
//! plain [`WorkflowDag`](blockflow_core::WorkflowDag)s.
//!
//! Expanders are pure and never look at executables: the same pattern with
//! different programs produces the same graph. Running a pattern is left to
//! any [`WorkflowExecutor`](blockflow_core::WorkflowExecutor).

mod error;
mod expand;
mod pattern;

pub use error::EnsembleError;
pub use expand::{
    execute_pattern, expand, expand_concurrent_pipelines, expand_replica_exchange, expand_simulation_analysis,
    pair_count, EvenOddPairing, Pairing,
};
pub use pattern::{PatternSpec, Pipeline, Stage, TaskTemplate};
