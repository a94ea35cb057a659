//! Line-delimited JSON task files.
//!
//! One task per line with the keys `id`, `exe`, `args`, `cores`, `mpi`,
//! `runtime`, `inputs`, `outputs` and `depends`; any other key is kept as
//! task metadata. Blank lines are ignored.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use blockflow_core::{serialize_task, translate_task, ExternalTaskRecord, TaskDescription, WorkflowDag};
use serde_json::Value;

use crate::error::InteropError;

pub fn format_task_lines(dag: &WorkflowDag) -> Result<String, InteropError> {
    let mut out = String::new();
    for (id, task) in &dag.tasks {
        let mut rec = serialize_task(task)?;
        let depends: Vec<Value> = dag.predecessors(id).map(|p| Value::String(p.to_string())).collect();
        rec.insert("depends".into(), Value::Array(depends));
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_task_lines(text: &str) -> Result<WorkflowDag, InteropError> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(map)) => records.push((n + 1, map)),
            Ok(other) => {
                return Err(InteropError::ParseError {
                    line: n + 1,
                    reason: format!("expected an object, got {other}"),
                })
            }
            Err(e) => {
                return Err(InteropError::ParseError {
                    line: n + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    build(records)
}

/// Builds a workflow from records already in memory; errors count records
/// from 1 as if they were lines of a file.
pub fn dag_from_records(records: &[ExternalTaskRecord]) -> Result<WorkflowDag, InteropError> {
    build(records.iter().cloned().enumerate().map(|(i, r)| (i + 1, r)).collect())
}

fn build(records: Vec<(usize, ExternalTaskRecord)>) -> Result<WorkflowDag, InteropError> {
    let mut tasks: Vec<TaskDescription> = Vec::new();
    let mut ids = BTreeSet::new();
    let mut edges = Vec::new();
    for (line_no, mut rec) in records {
        let parse_err = |reason: String| InteropError::ParseError { line: line_no, reason };
        let depends = match rec.remove("depends") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    other => Err(parse_err(format!("depends: expected string, got {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(other) => return Err(parse_err(format!("depends: expected array, got {other}"))),
        };
        let task = translate_task(&rec).map_err(|e| parse_err(e.to_string()))?;
        if !ids.insert(task.task_id.clone()) {
            return Err(parse_err(format!("duplicate task id `{}`", task.task_id)));
        }
        edges.extend(depends.into_iter().map(|d| (d, task.task_id.clone())));
        tasks.push(task);
    }
    if let Some((missing, _)) = edges.iter().find(|(d, _)| !ids.contains(d)) {
        return Err(InteropError::UnresolvedDependency(missing.clone()));
    }
    Ok(WorkflowDag::from_parts(tasks, edges)?)
}

pub fn write_task_file(path: impl AsRef<Path>, dag: &WorkflowDag) -> Result<(), InteropError> {
    blockflow_core::validate_dag(dag)?;
    fs::write(path, format_task_lines(dag)?)?;
    Ok(())
}

pub fn read_task_file(path: impl AsRef<Path>) -> Result<WorkflowDag, InteropError> {
    parse_task_lines(&fs::read_to_string(path)?)
}
