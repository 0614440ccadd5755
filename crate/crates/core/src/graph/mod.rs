//! The flat task graph produced by elaboration and consumed by the
//! scheduler.

mod check;
mod elaborate;
mod timing;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::TimingEquationDoc;

pub use check::{check_static, StaticFinding};
pub use elaborate::elaborate;
pub use timing::{bind_timing, TimingContext, MAKESPAN_SYMBOL};

pub type TaskId = usize;
pub type BufferId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: TaskId,
    /// Instance path, e.g. `top/sub[1,2]/leaf`.
    pub name: String,
    pub function: String,
    pub runtime: u64,
    pub internalsize: u64,
    pub inputs: Vec<BufferId>,
    /// Indices into [`TaskGraph::inputs`].
    #[serde(default)]
    pub external_inputs: Vec<usize>,
    pub outputs: Vec<BufferId>,
    /// `None` means every core.
    #[serde(default)]
    pub allowed_cores: Option<BTreeSet<usize>>,
}

impl TaskInstance {
    pub fn may_run_on(&self, core: usize) -> bool {
        self.allowed_cores.as_ref().is_none_or(|s| s.contains(&core))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buffer {
    pub id: BufferId,
    pub name: String,
    pub size: u64,
    pub definer: TaskId,
    pub observers: Vec<TaskId>,
    /// Catalog pattern names this buffer may move with.
    pub allowed_patterns: Vec<String>,
    #[serde(default)]
    pub labels: Vec<String>,
    /// Earliest cycle the buffer's transfer may start.
    #[serde(default)]
    pub release: Option<u64>,
    /// Cycle by which the buffer must be available to observers.
    #[serde(default)]
    pub due: Option<u64>,
}

/// A stream element that comes from outside the analysed slot; available
/// at its release time (0 unless constrained).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInput {
    pub name: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub release: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub tasks: Vec<TaskInstance>,
    pub buffers: Vec<Buffer>,
    #[serde(default)]
    pub inputs: Vec<GraphInput>,
    pub deadline: u64,
    #[serde(default)]
    pub max_start_lag: Option<u64>,
    /// Equations checked against every candidate schedule.
    #[serde(default)]
    pub bound_constraints: Vec<TimingEquationDoc>,
    /// Fixed values for equation symbols that are not schedule-derived.
    #[serde(default)]
    pub symbol_values: BTreeMap<String, i64>,
    #[serde(default = "default_period")]
    pub period_symbol: String,
}

fn default_period() -> String {
    "modem_period".into()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("flow `{0}` is not defined")]
    UnknownFlow(String),
    #[error("no function metadata for leaf `{callee}` (instantiated at {path})")]
    MissingMetadata { callee: String, path: String },
    #[error("function `{function}` lists pattern `{pattern}`, which is not in the catalog")]
    UnresolvedPattern { function: String, pattern: String },
    #[error("buffer `{0}` has no allowed pattern")]
    NoPatterns(String),
    #[error("stream element `{0}` is defined twice")]
    DoubleDefinition(String),
    #[error("stream element `{0}` is observed but never defined")]
    ReadBeforeWrite(String),
    #[error("task `{task}` writes input stream `{stream}`")]
    WritesInput { task: String, stream: String },
    #[error("cannot tell whether `{formal}` of leaf `{callee}` is read or written (name it `*_in`/`*_out` or bind a typed stream)")]
    AmbiguousDirection { callee: String, formal: String },
    #[error("parameter `{param}` of flow `{flow}` is not bound at {path}")]
    UnboundParam { flow: String, param: String, path: String },
    #[error("recursive instantiation of flow `{0}`")]
    Recursive(String),
    #[error("shape of `{0}` does not evaluate")]
    Shape(String),
    #[error("dependency cycle through task `{0}`")]
    Cycle(String),
    #[error("label `{0}` not found")]
    LabelNotFound(String),
    #[error("contradictory deadline: {0}")]
    ContradictoryDeadline(String),
    #[error("timing constraint `{doc}`: {message}")]
    Timing { doc: String, message: String },
    #[error("malformed graph: {0}")]
    Malformed(String),
}

impl TaskGraph {
    pub fn empty(deadline: u64) -> Self {
        Self {
            tasks: Vec::new(),
            buffers: Vec::new(),
            inputs: Vec::new(),
            deadline,
            max_start_lag: None,
            bound_constraints: Vec::new(),
            symbol_values: BTreeMap::new(),
            period_symbol: default_period(),
        }
    }

    /// Tasks whose outputs `t` reads.
    pub fn predecessors(&self, t: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.tasks[t].inputs.iter().map(move |&b| self.buffers[b].definer)
    }

    pub fn successors(&self, t: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.tasks[t]
            .outputs
            .iter()
            .flat_map(move |&b| self.buffers[b].observers.iter().copied())
    }

    /// Index and cross-reference consistency: ids match positions, every
    /// referenced buffer/task exists, and definer/observer lists agree with
    /// task input/output lists.
    pub fn check_consistency(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Malformed(m));
        for (i, t) in self.tasks.iter().enumerate() {
            if t.id != i {
                return bad(format!("task `{}` has id {} at position {i}", t.name, t.id));
            }
            if t.runtime == 0 {
                return bad(format!("task `{}` has zero runtime", t.name));
            }
            for &b in t.inputs.iter().chain(&t.outputs) {
                if b >= self.buffers.len() {
                    return bad(format!("task `{}` references missing buffer {b}", t.name));
                }
            }
            for &x in &t.external_inputs {
                if x >= self.inputs.len() {
                    return bad(format!("task `{}` references missing input {x}", t.name));
                }
            }
            for &b in &t.inputs {
                if !self.buffers[b].observers.contains(&i) {
                    return bad(format!(
                        "buffer `{}` does not list observer `{}`",
                        self.buffers[b].name, t.name
                    ));
                }
            }
            for &b in &t.outputs {
                if self.buffers[b].definer != i {
                    return bad(format!(
                        "buffer `{}` does not name `{}` as definer",
                        self.buffers[b].name, t.name
                    ));
                }
            }
        }
        for (i, b) in self.buffers.iter().enumerate() {
            if b.id != i {
                return bad(format!("buffer `{}` has id {} at position {i}", b.name, b.id));
            }
            if b.definer >= self.tasks.len() || !self.tasks[b.definer].outputs.contains(&i) {
                return bad(format!("buffer `{}` has no matching definer", b.name));
            }
            for &o in &b.observers {
                if o >= self.tasks.len() || !self.tasks[o].inputs.contains(&i) {
                    return bad(format!("buffer `{}` lists a non-reading observer", b.name));
                }
            }
        }
        Ok(())
    }

    /// Kahn order with ties broken by lowest id, or the first task left on a
    /// cycle.
    pub fn topological_order(&self) -> Result<Vec<TaskId>, GraphError> {
        let n = self.tasks.len();
        let mut indeg = vec![0usize; n];
        for t in 0..n {
            for s in self.successors(t) {
                indeg[s] += 1;
            }
        }
        let mut ready: BTreeSet<TaskId> = (0..n).filter(|&t| indeg[t] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(t) = ready.pop_first() {
            order.push(t);
            for s in self.successors(t) {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&t| indeg[t] > 0).unwrap();
            return Err(GraphError::Cycle(self.tasks[stuck].name.clone()));
        }
        Ok(order)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let g: TaskGraph = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
        g.check_consistency()?;
        g.topological_order()?;
        Ok(g)
    }
}
