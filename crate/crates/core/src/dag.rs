//! Workflows as directed acyclic graphs of tasks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::DagError;
use crate::task::TaskDescription;

/// Tasks plus `(predecessor, successor)` dependency edges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowDag {
    pub tasks: BTreeMap<String, TaskDescription>,
    pub edges: BTreeSet<(String, String)>,
}

impl WorkflowDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build and validate a DAG from a task list and edge list.
    pub fn from_parts<I>(tasks: Vec<TaskDescription>, edges: I) -> Result<Self, DagError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut dag = WorkflowDag::new();
        for t in tasks {
            dag.add_task(t)?;
        }
        dag.edges.extend(edges);
        validate_dag(&dag)?;
        Ok(dag)
    }

    pub fn add_task(&mut self, task: TaskDescription) -> Result<(), DagError> {
        if self.tasks.contains_key(&task.task_id) {
            return Err(DagError::DuplicateId(task.task_id));
        }
        self.tasks.insert(task.task_id.clone(), task);
        Ok(())
    }

    /// Adds an edge without checking; run [`validate_dag`] afterwards.
    pub fn add_edge(&mut self, pred: impl Into<String>, succ: impl Into<String>) {
        self.edges.insert((pred.into(), succ.into()));
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: &str) -> Option<&TaskDescription> {
        self.tasks.get(id)
    }

    pub fn predecessors(&self, id: &str) -> impl Iterator<Item = &str> + '_ {
        let id = id.to_string();
        self.edges
            .iter()
            .filter(move |(_, s)| *s == id)
            .map(|(p, _)| p.as_str())
    }

    pub fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .range((id.to_string(), String::new())..)
            .take_while(move |(p, _)| p == id)
            .map(|(_, s)| s.as_str())
    }

    /// Predecessor lists for every task, keyed by task id.
    pub fn predecessor_map(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = self.tasks.keys().map(|k| (k.as_str(), Vec::new())).collect();
        for (p, s) in &self.edges {
            if let Some(v) = map.get_mut(s.as_str()) {
                v.push(p.as_str());
            }
        }
        map
    }

    /// Deterministic topological order (Kahn, smallest id first).
    pub fn topological_order(&self) -> Result<Vec<String>, DagError> {
        validate_dag(self)?;
        Ok(kahn(self).0)
    }

    /// Longest dependency chain measured in estimated runtime.
    pub fn critical_path(&self) -> f64 {
        let (order, _) = kahn(self);
        let preds = self.predecessor_map();
        let mut finish: BTreeMap<&str, f64> = BTreeMap::new();
        for id in &order {
            let start = preds[id.as_str()]
                .iter()
                .map(|p| finish.get(p).copied().unwrap_or(0.0))
                .fold(0.0, f64::max);
            finish.insert(id.as_str(), start + self.tasks[id].runtime_estimate);
        }
        finish.values().copied().fold(0.0, f64::max)
    }

    /// Ids of every task transitively downstream of `id`.
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id.to_string()];
        while let Some(cur) = stack.pop() {
            for s in self.successors(&cur) {
                if out.insert(s.to_string()) {
                    stack.push(s.to_string());
                }
            }
        }
        out
    }
}

/// Returns (order, leftover) where leftover holds ids stuck on a cycle.
fn kahn(dag: &WorkflowDag) -> (Vec<String>, Vec<String>) {
    let mut indegree: BTreeMap<&str, usize> = dag.tasks.keys().map(|k| (k.as_str(), 0)).collect();
    for (_, s) in &dag.edges {
        if let Some(d) = indegree.get_mut(s.as_str()) {
            *d += 1;
        }
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(dag.tasks.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for s in dag.successors(id) {
            if let Some(d) = indegree.get_mut(s) {
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
    }
    let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
    let leftover = dag
        .tasks
        .keys()
        .filter(|k| !placed.contains(k.as_str()))
        .cloned()
        .collect();
    (order, leftover)
}

/// Checks ids, edge endpoints, task invariants and acyclicity.
pub fn validate_dag(dag: &WorkflowDag) -> Result<(), DagError> {
    for (key, task) in &dag.tasks {
        if *key != task.task_id {
            // the map key is an alias for an id that is already taken
            return Err(DagError::DuplicateId(task.task_id.clone()));
        }
        task.validate().map_err(|e| DagError::InvalidTask {
            id: key.clone(),
            reason: e.to_string(),
        })?;
    }
    for (p, s) in &dag.edges {
        for end in [p, s] {
            if !dag.tasks.contains_key(end) {
                return Err(DagError::UnknownEndpoint(end.clone()));
            }
        }
        if p == s {
            return Err(DagError::SelfEdge(p.clone()));
        }
    }
    let (_, leftover) = kahn(dag);
    if !leftover.is_empty() {
        return Err(DagError::CycleDetected(find_cycle(dag, &leftover)));
    }
    Ok(())
}

/// Extract one concrete cycle among the tasks Kahn could not place.
fn find_cycle(dag: &WorkflowDag, stuck: &[String]) -> Vec<String> {
    let stuck: BTreeSet<&str> = stuck.iter().map(String::as_str).collect();
    // every stuck node has a stuck predecessor; walk backwards until a repeat
    let preds = dag.predecessor_map();
    let mut path: Vec<&str> = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut cur = *stuck.iter().next().expect("non-empty");
    loop {
        if let Some(&at) = seen.get(cur) {
            let mut cycle: Vec<String> = path[at..].iter().rev().map(|s| s.to_string()).collect();
            cycle.push(cycle[0].clone());
            return cycle;
        }
        seen.insert(cur, path.len());
        path.push(cur);
        cur = preds[cur]
            .iter()
            .copied()
            .find(|p| stuck.contains(p))
            .expect("stuck node has a stuck predecessor");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: &str) -> TaskDescription {
        TaskDescription::new(id, "/bin/true", 10.0)
    }

    #[test]
    fn empty_dag_is_valid() {
        assert_eq!(validate_dag(&WorkflowDag::new()), Ok(()));
    }

    #[test]
    fn two_cycle_detected() {
        let mut dag = WorkflowDag::new();
        dag.add_task(t("A")).unwrap();
        dag.add_task(t("B")).unwrap();
        dag.add_edge("A", "B");
        dag.add_edge("B", "A");
        match validate_dag(&dag) {
            Err(DagError::CycleDetected(path)) => {
                assert_eq!(path.first(), path.last());
                assert_eq!(path.len(), 3);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn unknown_endpoint_and_self_edge() {
        let mut dag = WorkflowDag::new();
        dag.add_task(t("A")).unwrap();
        dag.add_edge("A", "Z");
        assert_eq!(validate_dag(&dag), Err(DagError::UnknownEndpoint("Z".into())));

        let mut dag = WorkflowDag::new();
        dag.add_task(t("A")).unwrap();
        dag.add_edge("A", "A");
        assert_eq!(validate_dag(&dag), Err(DagError::SelfEdge("A".into())));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = WorkflowDag::from_parts(vec![t("A"), t("A")], []).unwrap_err();
        assert_eq!(err, DagError::DuplicateId("A".into()));

        let mut dag = WorkflowDag::new();
        dag.tasks.insert("alias".into(), t("A"));
        assert_eq!(validate_dag(&dag), Err(DagError::DuplicateId("A".into())));
    }

    #[test]
    fn critical_path_of_diamond() {
        let mut b = t("B");
        b.runtime_estimate = 50.0;
        let dag = WorkflowDag::from_parts(
            vec![t("A"), b, t("C"), t("D")],
            [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")].map(|(a, b)| (a.to_string(), b.to_string())),
        )
        .unwrap();
        assert_eq!(dag.critical_path(), 70.0);
        assert_eq!(dag.topological_order().unwrap(), ["A", "B", "C", "D"]);
        assert_eq!(dag.descendants("B"), BTreeSet::from(["D".to_string()]));
    }
}
