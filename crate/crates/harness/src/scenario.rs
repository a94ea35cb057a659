//! Scenario files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use blockflow_core::{validate_dag, ExternalTaskRecord, PilotDescription, WorkflowDag};
use blockflow_ensemble::{expand, PatternSpec};
use blockflow_interop::{dag_from_records, read_task_file};
use blockflow_pilot::{Fault, Perturbation};
use blockflow_resource::{BackgroundLoad, Policy, ResourceModel};
use blockflow_wlms::StrategyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{config, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Workload manager planning pilots, pilot runtime executing units.
    #[default]
    FullStack,
    /// Hand-specified pilots fed directly with ready tasks.
    PilotOnly,
    /// Workload manager placing every task as its own batch job.
    WlmsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    Pattern(PatternSpec),
    /// Task file, relative to the scenario file.
    File(PathBuf),
    Inline(Vec<ExternalTaskRecord>),
}

impl Default for WorkloadSource {
    fn default() -> Self {
        WorkloadSource::Inline(Vec::new())
    }
}

/// A pilot requested by a pilot-only scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSpec {
    #[serde(flatten)]
    pub pilot: PilotDescription,
    /// Simulated time at which the pilot is submitted.
    #[serde(default)]
    pub submit_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub resources: Vec<ResourceModel>,
    /// Synthetic background load generated per resource from the seed.
    #[serde(default)]
    pub background: BTreeMap<String, BackgroundLoad>,
    #[serde(default)]
    pub workload: WorkloadSource,
    #[serde(default)]
    pub composition: Composition,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub pilots: Vec<PilotSpec>,
    /// Spread of the seeded runtime noise on units; 0 disables it.
    #[serde(default)]
    pub perturbation: f64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if s.name.is_empty() {
            s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    /// Checks everything a run needs without running it.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.resources.is_empty() {
            return Err(config("scenario has no resources"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.resources {
            m.validate().map_err(config)?;
            if !ids.insert(m.resource_id.as_str()) {
                return Err(config(format!("duplicate resource `{}`", m.resource_id)));
            }
        }
        if let Some(unknown) = self.background.keys().find(|k| !ids.contains(k.as_str())) {
            return Err(config(format!("background load for unknown resource `{unknown}`")));
        }
        for p in &self.pilots {
            if !ids.contains(p.pilot.target_resource.as_str()) {
                return Err(config(format!("pilot targets unknown resource `{}`", p.pilot.target_resource)));
            }
            if !(p.submit_at >= 0.0 && p.submit_at.is_finite()) {
                return Err(config("pilot submit_at must be a non-negative time"));
            }
        }
        if self.composition == Composition::PilotOnly && self.pilots.is_empty() {
            return Err(config("pilot_only composition needs at least one pilot"));
        }
        if !(0.0..1.0).contains(&self.perturbation) {
            return Err(config("perturbation must be in [0, 1)"));
        }
        if self.strategy.safety_factor < 1.0 || self.strategy.max_resources == 0 {
            return Err(config("strategy needs safety_factor >= 1 and max_resources >= 1"));
        }
        self.workflow()?;
        Ok(())
    }

    pub fn workflow(&self) -> Result<WorkflowDag, HarnessError> {
        let dag = match &self.workload {
            WorkloadSource::Pattern(spec) => expand(spec).map_err(config)?,
            WorkloadSource::File(path) => {
                let full = self.base_dir.join(path);
                if !full.exists() {
                    return Err(config(format!("task file {} does not exist", full.display())));
                }
                read_task_file(&full).map_err(config)?
            }
            WorkloadSource::Inline(records) => dag_from_records(records).map_err(config)?,
        };
        validate_dag(&dag).map_err(config)?;
        Ok(dag)
    }

    /// Resource models with their generated background load appended to
    /// any explicit trace. Trace generation is seeded per resource.
    pub fn models(&self) -> Vec<ResourceModel> {
        self.resources
            .iter()
            .map(|m| {
                let mut m = m.clone();
                if let Some(load) = self.background.get(&m.resource_id) {
                    let seed = self.seed ^ fnv1a(&m.resource_id);
                    m.background_load_trace.extend(load.generate(m.total_cores, seed));
                    m.background_load_trace.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
                m
            })
            .collect()
    }

    pub fn perturbation(&self) -> Option<Perturbation> {
        (self.perturbation > 0.0).then_some(Perturbation {
            spread: self.perturbation,
            seed: self.seed,
        })
    }

    /// The same scenario with every queue switched to `policy`.
    pub fn with_policy(&self, policy: Policy) -> Self {
        let mut s = self.clone();
        s.resources = s.resources.into_iter().map(|m| m.with_policy(policy)).collect();
        s
    }

    /// Keeps only the named resources (and pilots targeting them).
    pub fn restricted_to(&self, resource_ids: &[&str]) -> Self {
        let mut s = self.clone();
        s.resources.retain(|m| resource_ids.contains(&m.resource_id.as_str()));
        s.background.retain(|k, _| resource_ids.contains(&k.as_str()));
        s.pilots.retain(|p| resource_ids.contains(&p.pilot.target_resource.as_str()));
        s
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
