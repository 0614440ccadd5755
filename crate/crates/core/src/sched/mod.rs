//! Best-case scheduling of an elaborated task graph.
//!
//! A schedule is produced by dispatching tasks in a topological order: each
//! task is appended to its core (no insertion into earlier idle gaps) and
//! starts once its core is free and its inputs have arrived; each output
//! buffer's transfer is placed at the earliest time after the definer
//! finishes that does not overlap a conflicting transfer. The exact solver
//! searches every (order, core, pattern) combination of this dispatch space
//! and returns the minimum makespan within it.

mod bnb;
mod check;
mod heuristic;
mod model;
mod oracle;
pub mod random;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TaskGraph;
use crate::manifest::{HardwareTopology, PatternCatalog};
use crate::par::Parallelism;

pub use check::{check_schedule, compute_ready_times, CheckOptions, Violation, ViolationKind};
pub use oracle::{
    brute_force_oracle, OracleError, OracleResult, ORACLE_MAX_CORES, ORACLE_MAX_PATTERNS, ORACLE_MAX_TASKS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub task: usize,
    pub name: String,
    /// Core id as declared in the topology.
    pub core: usize,
    pub start: u64,
    pub finish: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferChoice {
    pub buffer: usize,
    pub name: String,
    pub pattern: String,
    pub start: u64,
    pub duration: u64,
}

impl TransferChoice {
    pub fn end(&self) -> u64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Indexed by task id.
    pub assignments: Vec<TaskAssignment>,
    /// Indexed by buffer id.
    pub pattern_choice: Vec<TransferChoice>,
    pub makespan: u64,
}

impl Schedule {
    pub fn empty() -> Self {
        Self {
            assignments: Vec::new(),
            pattern_choice: Vec::new(),
            makespan: 0,
        }
    }

    /// Busy cycles per core id, over the makespan.
    pub fn utilization(&self, topo: &HardwareTopology) -> Vec<(usize, f64)> {
        topo.cores
            .iter()
            .map(|c| {
                let busy: u64 = self
                    .assignments
                    .iter()
                    .filter(|a| a.core == c.id)
                    .map(|a| a.finish - a.start)
                    .sum();
                let u = if self.makespan == 0 {
                    0.0
                } else {
                    busy as f64 / self.makespan as f64
                };
                (c.id, u)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Heuristic,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "heuristic" => Ok(Mode::Heuristic),
            other => Err(format!("unknown mode `{other}` (expected exact|heuristic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub mode: Mode,
    /// Search nodes per parallel subtree.
    pub node_limit: u64,
    /// Wall-clock cap. Results under a time limit may vary between runs.
    pub time_limit: Option<Duration>,
    pub parallelism: Parallelism,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Exact,
            node_limit: 200_000,
            time_limit: None,
            parallelism: Parallelism::Parallel,
        }
    }
}

/// The constraint family blamed for infeasibility. Found by relaxing
/// families in this order until a schedule exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Witness {
    Deadline,
    BufferDue,
    TimingEquation,
    StartLag,
    Capacity,
    /// Core and pattern restrictions admit no dispatch at all.
    Placement,
}

impl Witness {
    pub fn as_str(self) -> &'static str {
        match self {
            Witness::Deadline => "DEADLINE",
            Witness::BufferDue => "BUFFER_DUE",
            Witness::TimingEquation => "TIMING_EQUATION",
            Witness::StartLag => "START_LAG",
            Witness::Capacity => "CAPACITY",
            Witness::Placement => "PLACEMENT",
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveOutcome {
    Optimal {
        schedule: Schedule,
    },
    /// Feasible schedule from heuristic mode; no optimality claim.
    Heuristic {
        schedule: Schedule,
    },
    Infeasible {
        witness: Witness,
    },
    /// The search budget ran out before optimality or infeasibility was
    /// proven.
    Unknown {
        incumbent: Option<Schedule>,
    },
}

impl SolveOutcome {
    pub fn schedule(&self) -> Option<&Schedule> {
        match self {
            SolveOutcome::Optimal { schedule } | SolveOutcome::Heuristic { schedule } => Some(schedule),
            SolveOutcome::Unknown { incumbent } => incumbent.as_ref(),
            SolveOutcome::Infeasible { .. } => None,
        }
    }

    pub fn makespan(&self) -> Option<u64> {
        self.schedule().map(|s| s.makespan)
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, SolveOutcome::Infeasible { .. })
    }

    pub fn status(&self) -> &'static str {
        match self {
            SolveOutcome::Optimal { .. } => "optimal",
            SolveOutcome::Heuristic { .. } => "heuristic",
            SolveOutcome::Infeasible { .. } => "infeasible",
            SolveOutcome::Unknown { .. } => "unknown",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedError {
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error("buffer `{buffer}`: pattern `{pattern}` is not in the catalog")]
    UnknownPattern { buffer: String, pattern: String },
    #[error("pattern `{pattern}`: {message}")]
    BadPattern { pattern: String, message: String },
    #[error("task `{task}` allows core {core}, which is not in the topology")]
    UnknownCore { task: String, core: usize },
    #[error("at most 64 cores are supported, topology has {0}")]
    TooManyCores(usize),
    #[error("timing equation `{doc}`: no value for `{symbol}`")]
    UnboundSymbol { doc: String, symbol: String },
}

/// Finds a minimum-makespan schedule in the dispatch space, or reports
/// infeasibility with the constraint family responsible.
pub fn solve_best_case(
    graph: &TaskGraph,
    topo: &HardwareTopology,
    catalog: &PatternCatalog,
    opts: &SolveOptions,
) -> Result<SolveOutcome, SchedError> {
    let m = model::Model::build(graph, topo, catalog)?;
    Ok(match solve_model(&m, opts) {
        Inner::Optimal(s) => SolveOutcome::Optimal {
            schedule: m.to_schedule(&s),
        },
        Inner::Heuristic(s) => SolveOutcome::Heuristic {
            schedule: m.to_schedule(&s),
        },
        Inner::Unknown(s) => SolveOutcome::Unknown {
            incumbent: s.map(|s| m.to_schedule(&s)),
        },
        Inner::Infeasible => SolveOutcome::Infeasible {
            witness: witness(&m, opts),
        },
    })
}

enum Inner {
    Optimal(model::Sol),
    Heuristic(model::Sol),
    Infeasible,
    Unknown(Option<model::Sol>),
}

fn solve_model(m: &model::Model, opts: &SolveOptions) -> Inner {
    if m.trivially_infeasible() {
        return Inner::Infeasible;
    }
    let seed = heuristic::list_schedule(m);
    match opts.mode {
        Mode::Heuristic => match seed {
            Some(s) => Inner::Heuristic(s),
            None => {
                let probe = SolveOptions {
                    node_limit: opts.node_limit.min(20_000),
                    ..opts.clone()
                };
                let r = bnb::search(m, None, &probe);
                match (r.best, r.complete) {
                    (Some(s), _) => Inner::Heuristic(s),
                    (None, true) => Inner::Infeasible,
                    (None, false) => Inner::Unknown(None),
                }
            }
        },
        Mode::Exact => {
            let r = bnb::search(m, seed, opts);
            match (r.best, r.complete) {
                (Some(s), true) => Inner::Optimal(s),
                (None, true) => Inner::Infeasible,
                (incumbent, false) => Inner::Unknown(incumbent),
            }
        }
    }
}

fn witness(m: &model::Model, opts: &SolveOptions) -> Witness {
    let order = [
        Witness::Deadline,
        Witness::BufferDue,
        Witness::TimingEquation,
        Witness::StartLag,
        Witness::Capacity,
    ];
    let mut relaxed = m.clone();
    for w in order {
        relaxed.relax(w);
        if relaxed.trivially_infeasible() {
            continue;
        }
        if heuristic::list_schedule(&relaxed).is_some() || bnb::search(&relaxed, None, opts).best.is_some() {
            return w;
        }
    }
    Witness::Placement
}
