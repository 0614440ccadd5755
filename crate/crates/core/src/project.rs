//! Run manifests: one YAML file naming every input of an analysis, loaded
//! and taken through parsing, validation and elaboration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{collect_labels, parse_flow_source, validate_flows, FlowDef, LabelMap, SymbolTable, ValidatedFlows};
use crate::graph::{bind_timing, check_static, elaborate, StaticFinding, TaskGraph, TimingContext};
use crate::manifest::{
    generate_patterns_from_topology, parse_constraint_stream, parse_pattern_catalog, ConstraintDoc, DeploymentConfig,
    FunctionMetadata, HardwareTopology, PatternCatalog,
};
use crate::scenario::{parse_scenario_docs, ScenarioSpec, StrategyConfig, Thresholds};
use crate::sched::{Mode, SolveOptions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_nodes")]
    pub node_limit: u64,
    /// Wall-clock cap per solve; makes results timing dependent.
    #[serde(default)]
    pub time_limit_ms: Option<u64>,
}

fn default_nodes() -> u64 {
    SolveOptions::default().node_limit
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mode: Mode::Exact,
            node_limit: default_nodes(),
            time_limit_ms: None,
        }
    }
}

impl SolverSettings {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            mode: self.mode,
            node_limit: self.node_limit,
            time_limit: self.time_limit_ms.map(std::time::Duration::from_millis),
            ..SolveOptions::default()
        }
    }
}

/// Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub flows: Vec<PathBuf>,
    /// Timing and SDK documents.
    #[serde(default)]
    pub constraints: Vec<PathBuf>,
    pub topology: PathBuf,
    /// Generated from the topology when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    pub deployment: PathBuf,
    #[serde(default)]
    pub scenarios: Vec<PathBuf>,
    #[serde(default)]
    pub builtin_scenarios: Option<bool>,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Seed for randomized helpers. The bundled pipeline is deterministic
    /// and only records it.
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{0}")]
    Graph(String),
}

fn read(path: &Path) -> Result<String, ProjectError> {
    fs::read_to_string(path).map_err(|e| ProjectError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn invalid(path: &Path, message: impl ToString) -> ProjectError {
    ProjectError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Everything a manifest names, parsed and cross-checked but not yet
/// elaborated.
#[derive(Debug, Clone)]
pub struct Project {
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
    pub flows: ValidatedFlows,
    pub labels: LabelMap,
    pub constraints: Vec<ConstraintDoc>,
    pub metadata: Vec<FunctionMetadata>,
    pub topology: HardwareTopology,
    pub catalog: PatternCatalog,
    pub deployment: DeploymentConfig,
    pub scenarios: Vec<ScenarioSpec>,
}

impl Project {
    pub fn load(manifest_path: &Path) -> Result<Self, ProjectError> {
        let text = read(manifest_path)?;
        let manifest: RunManifest = serde_yaml::from_str(&text).map_err(|e| invalid(manifest_path, e))?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let at = |p: &Path| base.join(p);

        let topo_path = at(&manifest.topology);
        let topology = HardwareTopology::from_yaml(&read(&topo_path)?).map_err(|e| invalid(&topo_path, e))?;

        let catalog = match &manifest.catalog {
            Some(p) => {
                let p = at(p);
                let c = parse_pattern_catalog(&read(&p)?).map_err(|e| invalid(&p, e))?;
                c.check_references().map_err(|e| invalid(&p, e))?;
                c.check_memories(&topology).map_err(|e| invalid(&p, e))?;
                c
            }
            None => generate_patterns_from_topology(&topology),
        };

        let dep_path = at(&manifest.deployment);
        let deployment = DeploymentConfig::from_yaml(&read(&dep_path)?).map_err(|e| invalid(&dep_path, e))?;

        let mut defs: Vec<FlowDef> = Vec::new();
        for p in &manifest.flows {
            let p = at(p);
            let parsed = parse_flow_source(&read(&p)?).map_err(|d| invalid(&p, d))?;
            defs.extend(parsed);
        }
        let symbols = SymbolTable {
            entries: deployment.symbols.clone(),
        };
        let flows_label = manifest
            .flows
            .first()
            .map(|p| at(p))
            .unwrap_or_else(|| manifest_path.to_path_buf());
        let flows = validate_flows(&defs, &symbols).map_err(|d| invalid(&flows_label, d))?;
        let labels = collect_labels(&flows.defs).map_err(|d| invalid(&flows_label, d))?;

        let mut constraints = Vec::new();
        let mut metadata = Vec::new();
        let dep_base = dep_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let meta_paths = deployment.metadata.iter().map(|p| dep_base.join(p));
        for p in manifest.constraints.iter().map(|p| at(p)).chain(meta_paths) {
            for doc in parse_constraint_stream(&read(&p)?).map_err(|e| invalid(&p, e))? {
                match doc {
                    ConstraintDoc::Function(f) => {
                        if metadata.iter().any(|m: &FunctionMetadata| m.name == f.name) {
                            return Err(invalid(&p, format!("function `{}` described twice", f.name)));
                        }
                        for pat in &f.available_patterns {
                            if catalog.resolve(pat).is_none() {
                                return Err(invalid(
                                    &p,
                                    format!(
                                        "function `{}` lists pattern `{pat}`, which is not in the catalog",
                                        f.name
                                    ),
                                ));
                            }
                        }
                        metadata.push(f);
                    }
                    other => constraints.push(other),
                }
            }
        }

        let mut scenarios = Vec::new();
        for p in &manifest.scenarios {
            let p = at(p);
            scenarios.extend(parse_scenario_docs(&read(&p)?).map_err(|e| invalid(&p, e))?);
        }

        Ok(Self {
            manifest_path: manifest_path.to_path_buf(),
            manifest,
            flows,
            labels,
            constraints,
            metadata,
            topology,
            catalog,
            deployment,
            scenarios,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&self.manifest.out)
    }

    /// Elaborates the entry flow and attaches timing constraints.
    pub fn graph(&self) -> Result<TaskGraph, ProjectError> {
        let d = &self.deployment;
        let g = elaborate(&self.flows, &d.entry_flow, &self.metadata, &self.catalog)
            .map_err(|e| ProjectError::Graph(e.to_string()))?;
        let ctx = TimingContext {
            slot_budget: d.slot_budget,
            period_symbol: d.period_symbol.clone(),
            max_start_lag: d.max_start_lag,
            assignments: d.assignments.clone(),
        };
        bind_timing(g, &self.constraints, &self.labels, &ctx).map_err(|e| ProjectError::Graph(e.to_string()))
    }

    pub fn static_findings(&self, g: &TaskGraph) -> Vec<StaticFinding> {
        check_static(g, &self.topology, &self.catalog)
    }
}

/// Findings that make a graph unusable; the rest are warnings.
pub fn is_fatal(f: &StaticFinding) -> bool {
    !matches!(f, StaticFinding::Unreachable { .. })
}
