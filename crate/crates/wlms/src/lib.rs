//! Workload manager: derive an execution strategy (which resources, how
//! many pilots of what size, which tasks where) from workload requirements
//! and resource models, then enact it over the pilot runtime.

pub mod direct;
pub mod enact;
pub mod error;
pub mod executor;
pub mod strategy;

pub use direct::enact_direct;
pub use enact::{enact, EnactOptions};
pub use error::WlmsError;
pub use executor::SimulatedWlms;
pub use strategy::{
    derive_strategy, rank_by_wait, select_resources, size_pilot, Binding, ExecutionStrategy, Objective,
    RankedResource, StrategyConfig,
};
