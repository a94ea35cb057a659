//! Integration surfaces for external workflow systems.
//!
//! Three ways in: a line-delimited JSON task file that another system
//! writes and we read back as a [`WorkflowDag`](blockflow_core::WorkflowDag);
//! a broker queue over which a remote workflow manager submits tasks and our
//! executor answers with state updates and capacity reports; and an embedded
//! pilot subsystem that only reveals terminal results.

mod broker;
mod error;
mod subsystem;
mod taskfile;

pub use broker::{read_journal, run_broker, run_broker_over, BrokerClient, BrokerMessage, BrokerQueue, NgeExecutor};
pub use error::InteropError;
pub use subsystem::{BatchId, Subsystem};
pub use taskfile::{dag_from_records, format_task_lines, parse_task_lines, read_task_file, write_task_file};
