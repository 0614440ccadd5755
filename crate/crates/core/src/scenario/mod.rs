//! Directed test scenarios: constraint injections applied to an elaborated
//! graph, each solved and compared against the unconstrained baseline.

mod inject;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TaskGraph;
use crate::manifest::{HardwareTopology, ManifestError, PatternCatalog};
use crate::par::map_vec;
use crate::sched::{solve_best_case, SchedError, SolveOptions, SolveOutcome, Witness};

pub use inject::{apply_injections, top_level_instances, Injection, Selector};
pub use report::{parse_scenario_docs, read_csv, render_table, write_csv, CSV_HEADER};

/// Name of the scenario with no injections.
pub const BASELINE: &str = "baseline";

/// Buffers below this many bytes count as small.
pub const SMALL_BUFFER_BYTES: u64 = 10 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default = "default_baseline")]
    pub baseline_ref: String,
}

fn default_baseline() -> String {
    BASELINE.into()
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, injections: Vec<Injection>) -> Self {
        Self {
            name: name.into(),
            injections,
            baseline_ref: BASELINE.into(),
        }
    }

    pub fn baseline() -> Self {
        Self::new(BASELINE, vec![])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Risk {
    CertainFailure,
    High,
    Moderate,
    Low,
}

impl Risk {
    pub fn as_str(self) -> &'static str {
        match self {
            Risk::CertainFailure => "CERTAIN_FAILURE",
            Risk::High => "HIGH",
            Risk::Moderate => "MODERATE",
            Risk::Low => "LOW",
        }
    }

    pub fn parse(s: &str) -> Option<Risk> {
        [Risk::CertainFailure, Risk::High, Risk::Moderate, Risk::Low]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Percent thresholds on latency increase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub high: i64,
    pub moderate: i64,
    /// LOW results under this delta are not recommended for lab time.
    pub floor: i64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            high: 50,
            moderate: 15,
            floor: 5,
        }
    }
}

impl Thresholds {
    pub fn classify(&self, delta_pct: i64) -> Risk {
        if delta_pct >= self.high {
            Risk::High
        } else if delta_pct >= self.moderate {
            Risk::Moderate
        } else {
            Risk::Low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Infeasible,
    Feasible { latency: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub outcome: Outcome,
    pub baseline: u64,
    /// Only for feasible outcomes.
    pub delta_pct: Option<i64>,
    pub risk: Risk,
}

impl ScenarioResult {
    pub fn from_latency(name: impl Into<String>, latency: Option<u64>, baseline: u64, th: &Thresholds) -> Self {
        let name = name.into();
        match latency {
            None => Self {
                name,
                outcome: Outcome::Infeasible,
                baseline,
                delta_pct: None,
                risk: Risk::CertainFailure,
            },
            Some(l) => {
                let d = delta_pct(baseline, l);
                Self {
                    name,
                    outcome: Outcome::Feasible { latency: l },
                    baseline,
                    delta_pct: Some(d),
                    risk: th.classify(d),
                }
            }
        }
    }

    pub fn latency(&self) -> Option<u64> {
        match self.outcome {
            Outcome::Feasible { latency } => Some(latency),
            Outcome::Infeasible => None,
        }
    }

    pub fn recommended(&self, th: &Thresholds) -> bool {
        !(self.risk == Risk::Low && self.delta_pct.unwrap_or(0) < th.floor)
    }
}

/// `(latency / baseline - 1) * 100`, rounded half up, in exact integer
/// arithmetic.
pub fn delta_pct(baseline: u64, latency: u64) -> i64 {
    assert!(baseline > 0, "baseline latency must be positive");
    let num = (latency as i128 - baseline as i128) * 100;
    let den = baseline as i128;
    (2 * num + den).div_euclid(2 * den) as i64
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("baseline is infeasible ({0}); scenario deltas are undefined")]
    InfeasibleBaseline(Witness),
    #[error("baseline has zero latency; scenario deltas are undefined")]
    EmptyBaseline,
    #[error("scenario `{0}`: search budget ran out without a result")]
    Undecided(String),
    #[error("scenario `{scenario}`: {message}")]
    Injection { scenario: String, message: String },
    #[error("scenario `{scenario}`: {source}")]
    Solve { scenario: String, source: SchedError },
    #[error("results have different baselines ({0} and {1})")]
    MixedBaselines(u64, u64),
    #[error("duplicate scenario name `{0}`")]
    DuplicateName(String),
    #[error("scenario `{name}` refers to unknown baseline `{baseline}`")]
    UnknownBaseline { name: String, baseline: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("CSV: {0}")]
    Csv(String),
    #[error("scenario `{0}` appears with conflicting results")]
    Conflict(String),
}

fn latency_of(name: &str, out: SolveOutcome) -> Result<Option<u64>, ScenarioError> {
    match out {
        SolveOutcome::Infeasible { .. } => Ok(None),
        other => other
            .makespan()
            .map(Some)
            .ok_or_else(|| ScenarioError::Undecided(name.to_string())),
    }
}

/// Latency of the unconstrained graph.
pub fn solve_baseline(
    graph: &TaskGraph,
    topo: &HardwareTopology,
    catalog: &PatternCatalog,
    opts: &SolveOptions,
) -> Result<u64, ScenarioError> {
    let out = solve_best_case(graph, topo, catalog, opts).map_err(|source| ScenarioError::Solve {
        scenario: BASELINE.into(),
        source,
    })?;
    if let SolveOutcome::Infeasible { witness } = out {
        return Err(ScenarioError::InfeasibleBaseline(witness));
    }
    match latency_of(BASELINE, out)? {
        Some(0) => Err(ScenarioError::EmptyBaseline),
        Some(l) => Ok(l),
        None => unreachable!("infeasible handled above"),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_scenario(
    spec: &ScenarioSpec,
    graph: &TaskGraph,
    topo: &HardwareTopology,
    catalog: &PatternCatalog,
    opts: &SolveOptions,
    baseline: u64,
    th: &Thresholds,
) -> Result<ScenarioResult, ScenarioError> {
    let g = apply_injections(graph, &spec.injections, catalog).map_err(|message| ScenarioError::Injection {
        scenario: spec.name.clone(),
        message,
    })?;
    let out = solve_best_case(&g, topo, catalog, opts).map_err(|source| ScenarioError::Solve {
        scenario: spec.name.clone(),
        source,
    })?;
    let latency = latency_of(&spec.name, out)?;
    Ok(ScenarioResult::from_latency(spec.name.clone(), latency, baseline, th))
}

/// Solves the baseline and every spec (in parallel when enabled) and
/// returns the ranked results. A baseline row is included.
pub fn run_scenarios(
    specs: &[ScenarioSpec],
    graph: &TaskGraph,
    topo: &HardwareTopology,
    catalog: &PatternCatalog,
    opts: &SolveOptions,
    th: &Thresholds,
) -> Result<Vec<ScenarioResult>, ScenarioError> {
    let mut names = BTreeSet::new();
    for s in specs {
        if !names.insert(s.name.as_str()) {
            return Err(ScenarioError::DuplicateName(s.name.clone()));
        }
        if s.baseline_ref != BASELINE {
            return Err(ScenarioError::UnknownBaseline {
                name: s.name.clone(),
                baseline: s.baseline_ref.clone(),
            });
        }
    }
    let baseline = solve_baseline(graph, topo, catalog, opts)?;
    // each scenario solves sequentially inside; the scenarios fan out
    let inner = SolveOptions {
        parallelism: crate::par::Parallelism::Sequential,
        ..opts.clone()
    };
    let rest: Vec<&ScenarioSpec> = specs.iter().filter(|s| s.name != BASELINE).collect();
    let results = map_vec(&rest, opts.parallelism, |s| {
        evaluate_scenario(s, graph, topo, catalog, &inner, baseline, th)
    });
    let mut all = vec![ScenarioResult::from_latency(BASELINE, Some(baseline), baseline, th)];
    for r in results {
        all.push(r?);
    }
    rank_scenarios(all)
}

/// Infeasible first, then larger delta, then name.
pub fn rank_scenarios(mut results: Vec<ScenarioResult>) -> Result<Vec<ScenarioResult>, ScenarioError> {
    if let Some(first) = results.first() {
        let b = first.baseline;
        if let Some(r) = results.iter().find(|r| r.baseline != b) {
            return Err(ScenarioError::MixedBaselines(b, r.baseline));
        }
    }
    results.sort_by(|a, b| {
        let key = |r: &ScenarioResult| {
            (
                r.risk != Risk::CertainFailure,
                std::cmp::Reverse(r.delta_pct.unwrap_or(0)),
            )
        };
        key(a).cmp(&key(b)).then_with(|| a.name.cmp(&b.name))
    });
    Ok(results)
}

/// Knobs for [`enumerate_scenarios`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub small_bytes: u64,
    pub lag_sweep: Vec<u64>,
    pub add_flow: bool,
    /// Top-level instance to copy for the added-flow scenario; defaults to
    /// the one with the most tasks.
    pub flow: Option<String>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            small_bytes: SMALL_BUFFER_BYTES,
            lag_sweep: Vec::new(),
            add_flow: true,
            flow: None,
        }
    }
}

/// The built-in families, baseline first. Families whose eviction would
/// leave some buffer without a pattern are skipped, and specs that
/// constrain the graph identically to an earlier one are dropped.
pub fn enumerate_scenarios(graph: &TaskGraph, catalog: &PatternCatalog, cfg: &StrategyConfig) -> Vec<ScenarioSpec> {
    if graph.tasks.is_empty() {
        return Vec::new();
    }
    let evict = |sel: Selector| Injection::EvictBuffer { target: sel };
    let mut cands = vec![ScenarioSpec::baseline()];
    cands.push(ScenarioSpec::new(
        "evict_small",
        vec![evict(Selector::SizeBelow(cfg.small_bytes))],
    ));
    let functions: BTreeSet<&str> = graph.tasks.iter().map(|t| t.function.as_str()).collect();
    for f in functions {
        cands.push(ScenarioSpec::new(
            format!("evict_fn:{f}"),
            vec![evict(Selector::Function(f.to_string()))],
        ));
    }
    cands.push(ScenarioSpec::new(
        "evict_large",
        vec![evict(Selector::SizeAtLeast(cfg.small_bytes))],
    ));
    cands.push(ScenarioSpec::new(
        "evict_small+large",
        vec![
            evict(Selector::SizeBelow(cfg.small_bytes)),
            evict(Selector::SizeAtLeast(cfg.small_bytes)),
        ],
    ));
    if cfg.add_flow {
        let flows = top_level_instances(graph);
        let pick = match &cfg.flow {
            Some(f) => flows.get(f).map(|_| f.clone()),
            None => flows
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(k, _)| k.clone()),
        };
        if let Some(f) = pick {
            cands.push(ScenarioSpec::new(
                "add_flow",
                vec![Injection::AddFlow {
                    target: Selector::Prefix(f),
                    count: 1,
                }],
            ));
        }
    }
    for &lag in &cfg.lag_sweep {
        cands.push(ScenarioSpec::new(
            format!("start_lag:{lag}"),
            vec![Injection::StartLag { cycles: lag }],
        ));
    }

    let mut seen: Vec<TaskGraph> = Vec::new();
    let mut out = Vec::new();
    for c in cands {
        let Ok(g) = apply_injections(graph, &c.injections, catalog) else {
            continue;
        };
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        out.push(c);
    }
    out
}

/// Per scenario name, the single result across several result sets.
pub fn merge_results(sets: &[Vec<ScenarioResult>]) -> Result<Vec<ScenarioResult>, ScenarioError> {
    let mut by_name: BTreeMap<String, ScenarioResult> = BTreeMap::new();
    for r in sets.iter().flatten() {
        match by_name.get(&r.name) {
            Some(prev) if prev != r => return Err(ScenarioError::Conflict(r.name.clone())),
            Some(_) => {}
            None => {
                by_name.insert(r.name.clone(), r.clone());
            }
        }
    }
    rank_scenarios(by_name.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(delta_pct(200, 201), 1); // 0.5
        assert_eq!(delta_pct(200, 200), 0);
        assert_eq!(delta_pct(1000, 1004), 0);
        assert_eq!(delta_pct(1000, 1005), 1);
        assert_eq!(delta_pct(1000, 995), 0); // -0.5 rounds up to 0
        assert_eq!(delta_pct(1000, 994), -1);
    }

    #[test]
    fn risk_bands() {
        let th = Thresholds::default();
        assert_eq!(th.classify(15), Risk::Moderate);
        assert_eq!(th.classify(14), Risk::Low);
        assert_eq!(th.classify(50), Risk::High);
        assert_eq!(th.classify(102), Risk::High);
    }

    fn res(name: &str, l: Option<u64>) -> ScenarioResult {
        ScenarioResult::from_latency(name, l, 207_800, &Thresholds::default())
    }

    #[test]
    fn ranking_puts_failures_first() {
        let r = rank_scenarios(vec![res("C", Some(239_400)), res("B", Some(420_000)), res("A", None)]).unwrap();
        let names: Vec<_> = r.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
        assert_eq!(r[1].delta_pct, Some(102));
        assert_eq!(r[2].delta_pct, Some(15));
    }

    #[test]
    fn zero_deltas_sort_by_name_and_are_not_recommended() {
        let r = rank_scenarios(vec![res("b", Some(207_800)), res("a", Some(207_800))]).unwrap();
        assert_eq!(r[0].name, "a");
        assert!(r.iter().all(|x| !x.recommended(&Thresholds::default())));
    }

    #[test]
    fn mixed_baselines_rejected() {
        let mut b = res("b", Some(1));
        b.baseline = 5;
        assert!(matches!(
            rank_scenarios(vec![res("a", Some(1)), b]),
            Err(ScenarioError::MixedBaselines(..))
        ));
    }

    #[test]
    fn merge_is_idempotent_and_detects_conflicts() {
        let a = vec![res("x", Some(239_400)), res("y", None)];
        assert_eq!(
            merge_results(&[a.clone(), a.clone()]).unwrap(),
            merge_results(std::slice::from_ref(&a)).unwrap()
        );
        let b = vec![res("x", Some(300_000))];
        assert_eq!(merge_results(&[a, b]), Err(ScenarioError::Conflict("x".into())));
    }
}
