//! Conversion layer between external task records and [`TaskDescription`].
//!
//! The external dialect is a flat JSON object with the keys `id`, `exe`,
//! `args`, `cores`, `mpi`, `runtime`, `inputs`, `outputs` and `depends`.
//! Any other key is carried through in `metadata`: string values verbatim,
//! everything else as its JSON text.

use serde_json::{Map, Value};

use crate::error::TaskError;
use crate::task::TaskDescription;

/// A task record as produced by an external system.
pub type ExternalTaskRecord = Map<String, Value>;

pub const RESERVED_KEYS: [&str; 9] = ["id", "exe", "args", "cores", "mpi", "runtime", "inputs", "outputs", "depends"];

pub fn translate_task(external: &ExternalTaskRecord) -> Result<TaskDescription, TaskError> {
    let task_id = required_string(external, "id")?;
    let executable = required_string(external, "exe")?;
    let cores = match external.get("cores") {
        None | Some(Value::Null) => 1,
        Some(v) => parse_cores(v)?,
    };
    let is_mpi = match external.get("mpi") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => match s.as_str() {
            "true" => true,
            "false" => false,
            _ => return Err(bad("mpi", format!("expected boolean, got {s:?}"))),
        },
        Some(other) => return Err(bad("mpi", format!("expected boolean, got {other}"))),
    };
    let runtime_estimate = match external.get("runtime") {
        None | Some(Value::Null) => return Err(TaskError::MissingField("runtime".into())),
        Some(v) => parse_f64(v, "runtime")?,
    };
    let mut metadata = std::collections::BTreeMap::new();
    for (k, v) in external {
        if RESERVED_KEYS.contains(&k.as_str()) {
            continue;
        }
        let text = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        metadata.insert(k.clone(), text);
    }
    let task = TaskDescription {
        task_id,
        executable,
        arguments: string_list(external, "args")?,
        cores,
        is_mpi,
        runtime_estimate,
        input_files: string_list(external, "inputs")?,
        output_files: string_list(external, "outputs")?,
        metadata,
    };
    task.validate()?;
    Ok(task)
}

/// Inverse of [`translate_task`] (without the `depends` key, which belongs
/// to the workflow rather than the task).
pub fn serialize_task(task: &TaskDescription) -> Result<ExternalTaskRecord, TaskError> {
    let mut rec = Map::new();
    rec.insert("id".into(), task.task_id.clone().into());
    rec.insert("exe".into(), task.executable.clone().into());
    rec.insert("args".into(), task.arguments.clone().into());
    rec.insert("cores".into(), task.cores.into());
    rec.insert("mpi".into(), task.is_mpi.into());
    rec.insert("runtime".into(), task.runtime_estimate.into());
    rec.insert("inputs".into(), task.input_files.clone().into());
    rec.insert("outputs".into(), task.output_files.clone().into());
    for (k, v) in &task.metadata {
        if RESERVED_KEYS.contains(&k.as_str()) {
            return Err(bad(k, "metadata key collides with a record key".into()));
        }
        rec.insert(k.clone(), Value::String(v.clone()));
    }
    Ok(rec)
}

fn bad(field: &str, reason: String) -> TaskError {
    TaskError::BadValue {
        field: field.to_string(),
        reason,
    }
}

fn required_string(rec: &ExternalTaskRecord, key: &str) -> Result<String, TaskError> {
    match rec.get(key) {
        None | Some(Value::Null) => Err(TaskError::MissingField(key.into())),
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(other) => Err(bad(key, format!("expected non-empty string, got {other}"))),
    }
}

fn string_list(rec: &ExternalTaskRecord, key: &str) -> Result<Vec<String>, TaskError> {
    match rec.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(bad(key, format!("expected string element, got {other}"))),
            })
            .collect(),
        Some(other) => Err(bad(key, format!("expected array of strings, got {other}"))),
    }
}

fn parse_f64(v: &Value, key: &str) -> Result<f64, TaskError> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    x.ok_or_else(|| bad(key, format!("expected number, got {v}")))
}

fn parse_cores(v: &Value) -> Result<u32, TaskError> {
    let x = parse_f64(v, "cores")?;
    if x < 1.0 || x.fract() != 0.0 || x > f64::from(u32::MAX) {
        return Err(bad("cores", format!("expected positive integer, got {v}")));
    }
    Ok(x as u32)
}
