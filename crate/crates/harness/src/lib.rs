//! Scenario runner for the blockflow stack: loads scenario files, runs them
//! on simulated resources and reports metrics computed from the event log.

pub mod audit;
mod error;
pub mod metrics;
mod runner;
mod scenario;

pub use audit::{easy_violations, late_binding_violations};
pub use error::HarnessError;
pub use metrics::{compute_metrics, format_report, parse_csv, resource_utilization, Metrics, ReportFormat, CSV_HEADER};
pub use runner::{run_scenario, RunOutput};
pub use scenario::{Composition, PilotSpec, Scenario, WorkloadSource};
