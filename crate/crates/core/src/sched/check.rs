//! Independent validation of a finished schedule. Works on the public
//! graph, topology and catalog types only, so it can judge schedules from
//! the solver and hand-built ones alike.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Schedule;
use crate::graph::{TaskGraph, MAKESPAN_SYMBOL};
use crate::manifest::{core_tag, evaluate_timing_equation, transfer_cost, HardwareTopology, MemLevel, PatternCatalog};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Treat the schedule as repeating every deadline: a buffer's next
    /// transfer must not start before this period's observers finish.
    pub wraparound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    ReadBeforeWrite,
    WriteBeforeRead,
    BufferOverflow,
    DeadlineMiss,
    CoreOverlap,
    PatternViolation,
    LagViolation,
    Contention,
    CoreRestriction,
    Timing,
    Malformed,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::ReadBeforeWrite => "READ_BEFORE_WRITE",
            ViolationKind::WriteBeforeRead => "WRITE_BEFORE_READ",
            ViolationKind::BufferOverflow => "BUFFER_OVERFLOW",
            ViolationKind::DeadlineMiss => "DEADLINE_MISS",
            ViolationKind::CoreOverlap => "CORE_OVERLAP",
            ViolationKind::PatternViolation => "PATTERN_VIOLATION",
            ViolationKind::LagViolation => "LAG_VIOLATION",
            ViolationKind::Contention => "CONTENTION",
            ViolationKind::CoreRestriction => "CORE_RESTRICTION",
            ViolationKind::Timing => "TIMING",
            ViolationKind::Malformed => "MALFORMED",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Per task, the time all its inputs are available: the end of every input
/// transfer and the release of every external input.
pub fn compute_ready_times(schedule: &Schedule, graph: &TaskGraph) -> Vec<u64> {
    graph
        .tasks
        .iter()
        .map(|t| {
            let ext = t.external_inputs.iter().map(|&x| graph.inputs[x].release);
            let bufs = t
                .inputs
                .iter()
                .filter_map(|&b| schedule.pattern_choice.get(b))
                .map(|c| c.end());
            ext.chain(bufs).max().unwrap_or(0)
        })
        .collect()
}

/// Every rule the schedule breaks. Empty means valid.
pub fn check_schedule(
    schedule: &Schedule,
    graph: &TaskGraph,
    topo: &HardwareTopology,
    catalog: &PatternCatalog,
    opts: &CheckOptions,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |kind, message: String| out.push(Violation { kind, message });

    if schedule.assignments.len() != graph.tasks.len() || schedule.pattern_choice.len() != graph.buffers.len() {
        v(
            ViolationKind::Malformed,
            format!(
                "schedule covers {} tasks and {} buffers, graph has {} and {}",
                schedule.assignments.len(),
                schedule.pattern_choice.len(),
                graph.tasks.len(),
                graph.buffers.len()
            ),
        );
        return out;
    }

    let core_at = |id: usize| topo.cores.iter().position(|c| c.id == id);
    let l2_of = |k: usize| topo.memory_index(&topo.cores[k].l2);

    // per-task sanity and core restrictions
    for (t, a) in graph.tasks.iter().zip(&schedule.assignments) {
        if a.finish != a.start + t.runtime {
            v(
                ViolationKind::Malformed,
                format!(
                    "task `{}` runs {}..{}, runtime is {}",
                    t.name, a.start, a.finish, t.runtime
                ),
            );
        }
        match core_at(a.core) {
            None => v(
                ViolationKind::CoreRestriction,
                format!("task `{}` on unknown core {}", t.name, a.core),
            ),
            Some(k) => {
                let c = &topo.cores[k];
                if t.allowed_cores.as_ref().is_some_and(|s| !s.contains(&c.id)) {
                    v(
                        ViolationKind::CoreRestriction,
                        format!("task `{}` may not run on core {}", t.name, c.id),
                    );
                }
                if c.accelerator_for.as_ref().is_some_and(|f| !f.contains(&t.function)) {
                    v(
                        ViolationKind::CoreRestriction,
                        format!("core {} does not run `{}` (task `{}`)", c.id, t.function, t.name),
                    );
                }
            }
        }
    }

    // transfers: pattern legality, cost, ordering against definer
    let mut resident_mem: Vec<Option<usize>> = vec![None; graph.buffers.len()];
    for (b, c) in graph.buffers.iter().zip(&schedule.pattern_choice) {
        let allowed = b
            .allowed_patterns
            .iter()
            .any(|p| catalog.resolve(p).is_some() && catalog.resolve(p) == catalog.resolve(&c.pattern));
        let Some(p) = catalog.by_name(&c.pattern).filter(|_| allowed) else {
            v(
                ViolationKind::PatternViolation,
                format!(
                    "buffer `{}` uses pattern `{}`, which it does not allow",
                    b.name, c.pattern
                ),
            );
            continue;
        };
        match transfer_cost(p, b.size, topo) {
            Ok(cost) if cost != c.duration => v(
                ViolationKind::PatternViolation,
                format!(
                    "buffer `{}` transfer lasts {}, pattern `{}` costs {}",
                    b.name, c.duration, p.name, cost
                ),
            ),
            Err(e) => v(ViolationKind::PatternViolation, format!("buffer `{}`: {e}", b.name)),
            _ => {}
        }
        let (Some(dm), Some(om)) = (
            topo.memory_index(&p.defining_memory),
            topo.memory_index(&p.observing_memory),
        ) else {
            v(
                ViolationKind::PatternViolation,
                format!("pattern `{}` names a memory outside the topology", p.name),
            );
            continue;
        };
        resident_mem[b.id] = Some(om);
        let def = &schedule.assignments[b.definer];
        if let Some(k) = core_at(def.core) {
            let ok = match core_tag(&p.name) {
                Some(tag) => topo.cores[k].id == tag,
                None => topo.memories[dm].level != MemLevel::L2 || l2_of(k) == Some(dm),
            };
            if !ok {
                v(
                    ViolationKind::PatternViolation,
                    format!(
                        "pattern `{}` cannot be defined from core {} (buffer `{}`)",
                        p.name, def.core, b.name
                    ),
                );
            }
        }
        if topo.memories[om].level == MemLevel::L2 {
            for &o in &b.observers {
                let a = &schedule.assignments[o];
                if core_at(a.core).is_some_and(|k| l2_of(k) != Some(om)) {
                    v(
                        ViolationKind::PatternViolation,
                        format!(
                            "task `{}` on core {} cannot observe `{}` in {}",
                            graph.tasks[o].name, a.core, b.name, p.observing_memory
                        ),
                    );
                }
            }
        }
        if c.start < def.finish {
            v(
                ViolationKind::ReadBeforeWrite,
                format!(
                    "buffer `{}` leaves at {} before `{}` finishes at {}",
                    b.name, c.start, graph.tasks[b.definer].name, def.finish
                ),
            );
        }
        if let Some(r) = b.release {
            if c.start < r {
                v(
                    ViolationKind::Timing,
                    format!("buffer `{}` leaves at {} before its release {}", b.name, c.start, r),
                );
            }
        }
        if let Some(d) = b.due {
            if c.end() > d {
                v(
                    ViolationKind::DeadlineMiss,
                    format!("buffer `{}` arrives at {} after its due time {}", b.name, c.end(), d),
                );
            }
        }
    }

    // reads: observers start after arrival, external inputs after release
    let ready = compute_ready_times(schedule, graph);
    for (t, a) in graph.tasks.iter().zip(&schedule.assignments) {
        for &b in &t.inputs {
            let c = &schedule.pattern_choice[b];
            if a.start < c.end() {
                v(
                    ViolationKind::ReadBeforeWrite,
                    format!(
                        "task `{}` starts at {} before `{}` arrives at {}",
                        t.name,
                        a.start,
                        c.name,
                        c.end()
                    ),
                );
            }
        }
        for &x in &t.external_inputs {
            let i = &graph.inputs[x];
            if a.start < i.release {
                v(
                    ViolationKind::ReadBeforeWrite,
                    format!(
                        "task `{}` starts at {} before input `{}` is released at {}",
                        t.name, a.start, i.name, i.release
                    ),
                );
            }
        }
        if let Some(lag) = graph.max_start_lag {
            if a.start > ready[t.id].saturating_add(lag) {
                v(
                    ViolationKind::LagViolation,
                    format!(
                        "task `{}` starts {} after it is ready, limit {}",
                        t.name,
                        a.start - ready[t.id],
                        lag
                    ),
                );
            }
        }
    }

    // cores run one task at a time
    let mut by_core: BTreeMap<usize, Vec<(u64, u64, usize)>> = BTreeMap::new();
    for a in &schedule.assignments {
        by_core.entry(a.core).or_default().push((a.start, a.finish, a.task));
    }
    for (core, mut list) in by_core {
        list.sort_unstable();
        for w in list.windows(2) {
            if w[1].0 < w[0].1 && w[0].1 > w[0].0 && w[1].1 > w[1].0 {
                v(
                    ViolationKind::CoreOverlap,
                    format!(
                        "tasks `{}` and `{}` overlap on core {core}",
                        graph.tasks[w[0].2].name, graph.tasks[w[1].2].name
                    ),
                );
            }
        }
    }

    // conflicting transfers never overlap
    let pc = &schedule.pattern_choice;
    for i in 0..pc.len() {
        for j in i + 1..pc.len() {
            let (x, y) = (&pc[i], &pc[j]);
            if x.duration == 0 || y.duration == 0 || x.start >= y.end() || y.start >= x.end() {
                continue;
            }
            let (Some(px), Some(py)) = (catalog.resolve(&x.pattern), catalog.resolve(&y.pattern)) else {
                continue;
            };
            if catalog.conflicts(px, py) {
                v(
                    ViolationKind::Contention,
                    format!(
                        "transfers of `{}` ({}) and `{}` ({}) overlap",
                        x.name, x.pattern, y.name, y.pattern
                    ),
                );
            }
        }
    }

    // memory residency
    let mut loads: Vec<Vec<(u64, u64, u64, String)>> = vec![Vec::new(); topo.memories.len()];
    for (b, c) in graph.buffers.iter().zip(pc) {
        let Some(m) = resident_mem[b.id] else { continue };
        let until = b
            .observers
            .iter()
            .map(|&o| schedule.assignments[o].finish)
            .fold(c.end(), u64::max);
        loads[m].push((c.start, until, b.size, b.name.clone()));
    }
    for (t, a) in graph.tasks.iter().zip(&schedule.assignments) {
        if let Some(m) = core_at(a.core).and_then(l2_of) {
            loads[m].push((a.start, a.finish, t.internalsize, format!("{} (scratch)", t.name)));
        }
    }
    for (mi, list) in loads.iter().enumerate() {
        let cap = topo.memories[mi].capacity;
        let mut worst: Option<(u64, u64)> = None;
        for &(at, _, _, _) in list {
            let used: u64 = list.iter().filter(|l| l.0 <= at && at < l.1).map(|l| l.2).sum();
            if used > cap && worst.is_none_or(|(_, u)| used > u) {
                worst = Some((at, used));
            }
        }
        if let Some((at, used)) = worst {
            v(
                ViolationKind::BufferOverflow,
                format!("{} holds {used} bytes at {at}, capacity {cap}", topo.memories[mi].id),
            );
        }
    }

    // makespan and deadline
    let actual = schedule
        .assignments
        .iter()
        .map(|a| a.finish)
        .chain(pc.iter().map(|c| c.end()))
        .max()
        .unwrap_or(0);
    if schedule.makespan != actual {
        v(
            ViolationKind::Malformed,
            format!("reported makespan {} but schedule ends at {actual}", schedule.makespan),
        );
    }
    if actual > graph.deadline {
        v(
            ViolationKind::DeadlineMiss,
            format!("schedule ends at {actual}, deadline {}", graph.deadline),
        );
    }

    // periodic reuse of buffers
    if opts.wraparound && graph.deadline != u64::MAX {
        for (b, c) in graph.buffers.iter().zip(pc) {
            let next = c.start + graph.deadline;
            for &o in &b.observers {
                let f = schedule.assignments[o].finish;
                if f > next {
                    v(
                        ViolationKind::WriteBeforeRead,
                        format!(
                            "next period overwrites `{}` at {next} while `{}` reads it until {f}",
                            b.name, graph.tasks[o].name
                        ),
                    );
                }
            }
        }
    }

    // timing equations
    for doc in &graph.bound_constraints {
        let mut env = BTreeMap::new();
        let mut missing = None;
        for sym in doc.symbols() {
            let val = if sym == MAKESPAN_SYMBOL {
                Some(actual as i64)
            } else if sym == graph.period_symbol {
                Some(graph.deadline.min(i64::MAX as u64) as i64)
            } else if let Some(x) = graph.symbol_values.get(sym) {
                Some(*x)
            } else {
                let arrivals = graph
                    .buffers
                    .iter()
                    .zip(pc)
                    .filter(|(b, _)| b.labels.iter().any(|l| l == sym))
                    .map(|(_, c)| c.end() as i64);
                let releases = graph
                    .inputs
                    .iter()
                    .filter(|i| i.labels.iter().any(|l| l == sym))
                    .map(|i| i.release as i64);
                arrivals.chain(releases).max()
            };
            match val {
                Some(x) => {
                    env.insert(sym.to_string(), x);
                }
                None => missing = Some(sym.to_string()),
            }
        }
        if let Some(sym) = missing {
            v(
                ViolationKind::Timing,
                format!("`{}` has no value for `{sym}`", doc.name),
            );
            continue;
        }
        match evaluate_timing_equation(doc, &env) {
            Ok(true) => {}
            Ok(false) => v(ViolationKind::Timing, format!("`{}` does not hold", doc.name)),
            Err(e) => v(ViolationKind::Timing, e.to_string()),
        }
    }

    out
}
