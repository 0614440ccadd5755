//! Exhaustive reference solver. Deliberately shares no code with the
//! branch and bound: it walks every topological order, every core per task
//! and every allowed pattern per buffer, places each dispatch greedily, and
//! keeps the minimum makespan. The only pruning is dropping prefixes whose
//! makespan already reaches the best complete schedule.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::graph::{TaskGraph, MAKESPAN_SYMBOL};
use crate::manifest::{core_tag, evaluate_timing_equation, transfer_cost, HardwareTopology, MemLevel, PatternCatalog};
use crate::par::{map_vec, Parallelism};

pub const ORACLE_MAX_TASKS: usize = 8;
pub const ORACLE_MAX_CORES: usize = 2;
pub const ORACLE_MAX_PATTERNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleResult {
    Makespan(u64),
    Infeasible,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("{0}")]
    Model(String),
}

struct Way {
    pattern: String,
    cost: u64,
    def_cores: HashSet<usize>,
    obs_cores: HashSet<usize>,
    mem: usize,
}

struct Inst<'a> {
    g: &'a TaskGraph,
    ways: Vec<Vec<Way>>,
    cores: Vec<HashSet<usize>>,
    l2: Vec<usize>,
    caps: Vec<u64>,
    catalog: &'a PatternCatalog,
}

#[derive(Clone)]
struct Partial {
    order: Vec<usize>,
    core: Vec<Option<usize>>,
    start: Vec<u64>,
    way: Vec<Option<usize>>,
    xfer: Vec<u64>,
}

pub fn brute_force_oracle(
    graph: &TaskGraph,
    topo: &HardwareTopology,
    catalog: &PatternCatalog,
) -> Result<OracleResult, OracleError> {
    if graph.tasks.len() > ORACLE_MAX_TASKS {
        return Err(OracleError::TooLarge(format!(
            "{} tasks > {ORACLE_MAX_TASKS}",
            graph.tasks.len()
        )));
    }
    if topo.cores.len() > ORACLE_MAX_CORES {
        return Err(OracleError::TooLarge(format!(
            "{} cores > {ORACLE_MAX_CORES}",
            topo.cores.len()
        )));
    }
    if let Some(b) = graph
        .buffers
        .iter()
        .find(|b| b.allowed_patterns.len() > ORACLE_MAX_PATTERNS)
    {
        return Err(OracleError::TooLarge(format!(
            "buffer `{}` allows {} patterns > {ORACLE_MAX_PATTERNS}",
            b.name,
            b.allowed_patterns.len()
        )));
    }
    if graph.tasks.is_empty() {
        return Ok(OracleResult::Makespan(0));
    }
    let inst = Inst::new(graph, topo, catalog)?;
    let empty = Partial {
        order: Vec::new(),
        core: vec![None; graph.tasks.len()],
        start: vec![0; graph.tasks.len()],
        way: vec![None; graph.buffers.len()],
        xfer: vec![0; graph.buffers.len()],
    };
    let firsts = inst.extensions(&empty);
    let best = map_vec(&firsts, Parallelism::Parallel, |p| {
        let mut best = u64::MAX;
        inst.walk(p, &mut best);
        best
    })
    .into_iter()
    .min()
    .unwrap_or(u64::MAX);
    Ok(if best == u64::MAX {
        OracleResult::Infeasible
    } else {
        OracleResult::Makespan(best)
    })
}

impl<'a> Inst<'a> {
    fn new(g: &'a TaskGraph, topo: &HardwareTopology, catalog: &'a PatternCatalog) -> Result<Self, OracleError> {
        let ncores = topo.cores.len();
        let mem = |id: &str| {
            topo.memory_index(id)
                .ok_or_else(|| OracleError::Model(format!("unknown memory `{id}`")))
        };
        let l2: Vec<usize> = topo.cores.iter().map(|c| mem(&c.l2)).collect::<Result<_, _>>()?;
        let on_l2 = |m: usize| -> HashSet<usize> { (0..ncores).filter(|&k| l2[k] == m).collect() };
        let everyone: HashSet<usize> = (0..ncores).collect();
        let mut ways = Vec::new();
        for b in &g.buffers {
            let mut list = Vec::new();
            for name in &b.allowed_patterns {
                let p = catalog
                    .by_name(name)
                    .ok_or_else(|| OracleError::Model(format!("unknown pattern `{name}`")))?;
                let dm = mem(&p.defining_memory)?;
                let om = mem(&p.observing_memory)?;
                let def_cores = if let Some(tag) = core_tag(&p.name) {
                    topo.cores
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.id == tag)
                        .map(|(k, _)| k)
                        .collect()
                } else if topo.memories[dm].level == MemLevel::L2 {
                    on_l2(dm)
                } else {
                    everyone.clone()
                };
                let obs_cores = if topo.memories[om].level == MemLevel::L2 {
                    on_l2(om)
                } else {
                    everyone.clone()
                };
                list.push(Way {
                    pattern: p.name.clone(),
                    cost: transfer_cost(p, b.size, topo).map_err(|e| OracleError::Model(e.to_string()))?,
                    def_cores,
                    obs_cores,
                    mem: om,
                });
            }
            let referenced = g.bound_constraints.iter().flat_map(|d| d.symbols()).any(|sym| {
                sym != MAKESPAN_SYMBOL
                    && sym != g.period_symbol
                    && !g.symbol_values.contains_key(sym)
                    && b.labels.iter().any(|l| l == sym)
            });
            if b.observers.is_empty() && !referenced {
                // unread output: free placements make the others redundant
                let free: Vec<HashSet<usize>> = list
                    .iter()
                    .filter(|w| w.cost == 0)
                    .map(|w| w.def_cores.clone())
                    .collect();
                list.retain(|w| w.cost == 0 || !free.iter().any(|f| w.def_cores.is_subset(f)));
            }
            ways.push(list);
        }
        let cores = g
            .tasks
            .iter()
            .map(|t| {
                (0..ncores)
                    .filter(|&k| {
                        let c = &topo.cores[k];
                        t.allowed_cores.as_ref().is_none_or(|s| s.contains(&c.id))
                            && c.accelerator_for.as_ref().is_none_or(|f| f.contains(&t.function))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            g,
            ways,
            cores,
            l2,
            caps: topo.memories.iter().map(|m| m.capacity).collect(),
            catalog,
        })
    }

    fn clashes(&self, a: &str, b: &str) -> bool {
        let (Some(x), Some(y)) = (self.catalog.resolve(a), self.catalog.resolve(b)) else {
            return false;
        };
        self.catalog.conflicts(x, y)
    }

    fn finish(&self, p: &Partial, t: usize) -> u64 {
        p.start[t] + self.g.tasks[t].runtime
    }

    fn arrival(&self, p: &Partial, b: usize) -> u64 {
        p.xfer[b] + self.ways[b][p.way[b].unwrap()].cost
    }

    fn span(&self, p: &Partial) -> u64 {
        let mut m = 0;
        for &t in &p.order {
            m = m.max(self.finish(p, t));
            for &b in &self.g.tasks[t].outputs {
                m = m.max(self.arrival(p, b));
            }
        }
        m
    }

    /// Every way to dispatch one more task after `p`.
    fn extensions(&self, p: &Partial) -> Vec<Partial> {
        let g = self.g;
        let mut out = Vec::new();
        for t in 0..g.tasks.len() {
            if p.core[t].is_some() {
                continue;
            }
            if g.predecessors(t).any(|d| p.core[d].is_none()) {
                continue;
            }
            let task = &g.tasks[t];
            let mut ready = task
                .external_inputs
                .iter()
                .map(|&x| g.inputs[x].release)
                .max()
                .unwrap_or(0);
            for &b in &task.inputs {
                ready = ready.max(self.arrival(p, b));
            }
            for &k in &self.cores[t] {
                if task
                    .inputs
                    .iter()
                    .any(|&b| !self.ways[b][p.way[b].unwrap()].obs_cores.contains(&k))
                {
                    continue;
                }
                let core_end = p
                    .order
                    .iter()
                    .filter(|&&u| p.core[u] == Some(k))
                    .map(|&u| self.finish(p, u))
                    .max()
                    .unwrap_or(0);
                let start = ready.max(core_end);
                if let Some(lag) = g.max_start_lag {
                    if start - ready > lag {
                        continue;
                    }
                }
                let mut q = p.clone();
                q.order.push(t);
                q.core[t] = Some(k);
                q.start[t] = start;
                self.outputs(&q, t, k, 0, &mut out);
            }
        }
        out
    }

    fn outputs(&self, q: &Partial, t: usize, k: usize, i: usize, out: &mut Vec<Partial>) {
        let task = &self.g.tasks[t];
        if i == task.outputs.len() {
            out.push(q.clone());
            return;
        }
        let b = task.outputs[i];
        let buf = &self.g.buffers[b];
        for (wi, w) in self.ways[b].iter().enumerate() {
            if !w.def_cores.contains(&k) {
                continue;
            }
            let lo = self.finish(q, t).max(buf.release.unwrap_or(0));
            let mut placed: Vec<(u64, u64)> = Vec::new();
            if w.cost > 0 {
                for c in 0..self.g.buffers.len() {
                    if let Some(ci) = q.way[c] {
                        let other = &self.ways[c][ci];
                        if other.cost > 0 && self.clashes(&w.pattern, &other.pattern) {
                            placed.push((q.xfer[c], q.xfer[c] + other.cost));
                        }
                    }
                }
            }
            let free = |s: u64| placed.iter().all(|&(a, e)| s + w.cost <= a || e <= s);
            let start = std::iter::once(lo)
                .chain(placed.iter().map(|&(_, e)| e).filter(|&e| e >= lo))
                .filter(|&s| free(s))
                .min()
                .unwrap();
            if let Some(due) = buf.due {
                if start + w.cost > due {
                    continue;
                }
            }
            let mut r = q.clone();
            r.way[b] = Some(wi);
            r.xfer[b] = start;
            self.outputs(&r, t, k, i + 1, out);
        }
    }

    fn walk(&self, p: &Partial, best: &mut u64) {
        if self.span(p) >= *best {
            return;
        }
        if p.order.len() == self.g.tasks.len() {
            if self.acceptable(p) {
                *best = self.span(p);
            }
            return;
        }
        for q in self.extensions(p) {
            self.walk(&q, best);
        }
    }

    fn acceptable(&self, p: &Partial) -> bool {
        let g = self.g;
        let span = self.span(p);
        if span > g.deadline {
            return false;
        }
        // residency per memory
        let mut use_by_mem: Vec<Vec<(u64, u64, u64)>> = vec![Vec::new(); self.caps.len()];
        for (b, buf) in g.buffers.iter().enumerate() {
            let w = &self.ways[b][p.way[b].unwrap()];
            let until = buf
                .observers
                .iter()
                .map(|&v| self.finish(p, v))
                .chain(std::iter::once(self.arrival(p, b)))
                .max()
                .unwrap();
            use_by_mem[w.mem].push((p.xfer[b], until, buf.size));
        }
        for (t, task) in g.tasks.iter().enumerate() {
            let k = p.core[t].unwrap();
            use_by_mem[self.l2[k]].push((p.start[t], self.finish(p, t), task.internalsize));
        }
        for (mi, uses) in use_by_mem.iter().enumerate() {
            for &(at, _, _) in uses {
                let load: u64 = uses.iter().filter(|&&(s, e, _)| s <= at && at < e).map(|u| u.2).sum();
                if load > self.caps[mi] {
                    return false;
                }
            }
        }
        for doc in &g.bound_constraints {
            let mut env = BTreeMap::new();
            for sym in doc.symbols() {
                let v: i64 = if sym == MAKESPAN_SYMBOL {
                    span as i64
                } else if sym == g.period_symbol {
                    g.deadline.min(i64::MAX as u64) as i64
                } else if let Some(v) = g.symbol_values.get(sym) {
                    *v
                } else {
                    let bufs = g
                        .buffers
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| b.labels.iter().any(|l| l == sym));
                    let ins = g.inputs.iter().filter(|x| x.labels.iter().any(|l| l == sym));
                    bufs.map(|(b, _)| self.arrival(p, b) as i64)
                        .chain(ins.map(|x| x.release as i64))
                        .max()
                        .unwrap_or(0)
                };
                env.insert(sym.to_string(), v);
            }
            if evaluate_timing_equation(doc, &env) != Ok(true) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Buffer, TaskInstance};
    use crate::manifest::generate_patterns_from_topology;

    #[test]
    fn empty_graph_is_zero() {
        let t = HardwareTopology::uniform(1, 1 << 20, 1 << 25);
        let r = brute_force_oracle(&TaskGraph::empty(100), &t, &generate_patterns_from_topology(&t)).unwrap();
        assert_eq!(r, OracleResult::Makespan(0));
    }

    #[test]
    fn single_task_is_its_runtime() {
        let t = HardwareTopology::uniform(2, 1 << 20, 1 << 25);
        let mut g = TaskGraph::empty(1_000_000);
        g.tasks.push(TaskInstance {
            id: 0,
            name: "a".into(),
            function: "f".into(),
            runtime: 7200,
            internalsize: 0,
            inputs: vec![],
            external_inputs: vec![],
            outputs: vec![0],
            allowed_cores: None,
        });
        g.buffers.push(Buffer {
            id: 0,
            name: "o".into(),
            size: 100,
            definer: 0,
            observers: vec![],
            allowed_patterns: vec!["pipeline.c_0.L3_0".into(), "pipeline.c_1.L3_0".into()],
            labels: vec![],
            release: None,
            due: None,
        });
        let r = brute_force_oracle(&g, &t, &generate_patterns_from_topology(&t)).unwrap();
        assert_eq!(r, OracleResult::Makespan(7200));
    }

    #[test]
    fn refuses_large_instances() {
        let t = HardwareTopology::uniform(3, 1 << 20, 1 << 25);
        assert!(matches!(
            brute_force_oracle(&TaskGraph::empty(1), &t, &generate_patterns_from_topology(&t)),
            Err(OracleError::TooLarge(_))
        ));
    }
}
