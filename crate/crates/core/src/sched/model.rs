//! The graph, topology and catalog flattened into index-based tables for
//! the search. Cores are bit positions in a `u64` mask.

use std::collections::BTreeMap;

use super::{SchedError, Schedule, TaskAssignment, TransferChoice, Witness};
use crate::graph::{TaskGraph, MAKESPAN_SYMBOL};
use crate::manifest::{
    canonical, core_tag, transfer_cost, HardwareTopology, MemLevel, PatternCatalog, TimingEquationDoc,
};

/// One way to move a buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Opt {
    /// Local pattern index.
    pub pat: usize,
    pub cost: u64,
    /// Cores the definer may run on.
    pub def_mask: u64,
    /// Cores observers may run on.
    pub obs_mask: u64,
    /// Memory the buffer stays resident in.
    pub mem: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct BufM {
    pub size: u64,
    pub definer: usize,
    pub observers: Vec<usize>,
    pub release: u64,
    pub due: Option<u64>,
    pub opts: Vec<Opt>,
    pub min_cost: u64,
    /// Cheapest option that lets an observer run on another core than the
    /// definer; `u64::MAX` if every option keeps them together.
    pub split_cost: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct TaskM {
    pub runtime: u64,
    pub internal: u64,
    pub core_mask: u64,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub release: u64,
    pub preds: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) enum Src {
    Makespan,
    Const(i64),
    /// Latest arrival among these buffers, floored by a constant.
    Labeled(Vec<usize>, i64),
}

#[derive(Debug, Clone)]
pub(crate) struct Equation {
    pub doc: TimingEquationDoc,
    pub sources: BTreeMap<String, Src>,
}

impl Equation {
    fn references(&self, b: usize) -> bool {
        self.sources
            .values()
            .any(|s| matches!(s, Src::Labeled(v, _) if v.contains(&b)))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub tasks: Vec<TaskM>,
    pub bufs: Vec<BufM>,
    pub ncores: usize,
    pub core_ids: Vec<usize>,
    pub core_l2: Vec<usize>,
    pub mem_cap: Vec<u64>,
    /// Memories whose capacity could be exceeded at all.
    pub mem_check: Vec<bool>,
    pub pat_names: Vec<String>,
    pub conflict: Vec<Vec<bool>>,
    pub deadline: u64,
    pub lag: Option<u64>,
    pub check_due: bool,
    pub check_capacity: bool,
    pub equations: Vec<Equation>,
    pub topo_order: Vec<usize>,
    /// Lower bound on the time from a task's start to the end of the slot.
    pub tail: Vec<u64>,
    /// Cores interchangeable with each core, itself included.
    pub sym: Vec<u64>,
    /// Buffers whose arrival some equation reads.
    pub equation_bufs: Vec<bool>,
    /// Per task, the previous member of its class of interchangeable tasks;
    /// classes are dispatched in index order.
    pub twin_before: Vec<Option<usize>>,
    task_names: Vec<String>,
    buf_names: Vec<String>,
}

/// A complete dispatch: per task its start and core index, per buffer its
/// option index and transfer start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Sol {
    pub start: Vec<u64>,
    pub core: Vec<usize>,
    pub choice: Vec<usize>,
    pub tstart: Vec<u64>,
    pub makespan: u64,
}

fn bit(k: usize) -> u64 {
    1u64 << k
}

impl Model {
    pub fn build(graph: &TaskGraph, topo: &HardwareTopology, catalog: &PatternCatalog) -> Result<Self, SchedError> {
        graph.check_consistency()?;
        let topo_order = graph.topological_order()?;
        let ncores = topo.cores.len();
        if ncores > 64 {
            return Err(SchedError::TooManyCores(ncores));
        }
        let all: u64 = if ncores == 64 { u64::MAX } else { bit(ncores) - 1 };
        let core_ids: Vec<usize> = topo.cores.iter().map(|c| c.id).collect();
        let mem_cap: Vec<u64> = topo.memories.iter().map(|m| m.capacity).collect();
        let mem_of = |id: &str, pattern: &str| {
            topo.memory_index(id).ok_or_else(|| SchedError::BadPattern {
                pattern: pattern.to_string(),
                message: format!("memory `{id}` is not in the topology"),
            })
        };
        let core_l2: Vec<usize> = topo
            .cores
            .iter()
            .map(|c| mem_of(&c.l2, "<core>"))
            .collect::<Result<_, _>>()?;
        let l2_mask = |mem: usize| -> u64 { (0..ncores).filter(|&k| core_l2[k] == mem).fold(0, |a, k| a | bit(k)) };

        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        let mut pat_global: Vec<usize> = Vec::new();
        let mut bufs = Vec::with_capacity(graph.buffers.len());
        for b in &graph.buffers {
            let mut opts = Vec::new();
            for name in &b.allowed_patterns {
                let gi = catalog.resolve(name).ok_or_else(|| SchedError::UnknownPattern {
                    buffer: b.name.clone(),
                    pattern: name.clone(),
                })?;
                let p = catalog.get(gi);
                let cost = transfer_cost(p, b.size, topo).map_err(|e| SchedError::BadPattern {
                    pattern: p.name.clone(),
                    message: e.to_string(),
                })?;
                let def_mem = mem_of(&p.defining_memory, &p.name)?;
                let obs_mem = mem_of(&p.observing_memory, &p.name)?;
                let def_mask = match core_tag(&p.name) {
                    Some(tag) => core_ids.iter().position(|&c| c == tag).map_or(0, bit),
                    None if topo.memories[def_mem].level == MemLevel::L2 => l2_mask(def_mem),
                    None => all,
                };
                let obs_mask = if topo.memories[obs_mem].level == MemLevel::L2 {
                    l2_mask(obs_mem)
                } else {
                    all
                };
                let next = pat_global.len();
                let pat = *local.entry(gi).or_insert_with(|| {
                    pat_global.push(gi);
                    next
                });
                let o = Opt {
                    pat,
                    cost,
                    def_mask,
                    obs_mask,
                    mem: obs_mem,
                };
                if !opts.contains(&o) {
                    opts.push(o);
                }
            }
            bufs.push(BufM {
                size: b.size,
                definer: b.definer,
                observers: dedup(&b.observers),
                release: b.release.unwrap_or(0),
                due: b.due,
                min_cost: 0,
                split_cost: 0,
                opts,
            });
        }
        let np = pat_global.len();
        let conflict: Vec<Vec<bool>> = (0..np)
            .map(|i| {
                (0..np)
                    .map(|j| catalog.conflicts(pat_global[i], pat_global[j]))
                    .collect()
            })
            .collect();
        // Options with identical cost, restrictions, residency and conflict
        // behaviour yield identical schedules; keep the first.
        for b in &mut bufs {
            let mut kept: Vec<Opt> = Vec::new();
            for o in &b.opts {
                let same = kept.iter().any(|k| {
                    k.cost == o.cost
                        && k.def_mask == o.def_mask
                        && k.obs_mask == o.obs_mask
                        && k.mem == o.mem
                        && conflict[k.pat] == conflict[o.pat]
                        && (0..np).all(|x| conflict[x][k.pat] == conflict[x][o.pat])
                });
                if !same {
                    kept.push(o.clone());
                }
            }
            b.min_cost = kept.iter().map(|o| o.cost).min().unwrap_or(0);
            b.split_cost = kept
                .iter()
                .filter(|o| !(o.def_mask.count_ones() == 1 && o.obs_mask == o.def_mask))
                .map(|o| o.cost)
                .min()
                .unwrap_or(u64::MAX);
            b.opts = kept;
        }

        let mut tasks = Vec::with_capacity(graph.tasks.len());
        for t in &graph.tasks {
            let mut mask = match &t.allowed_cores {
                None => all,
                Some(set) => {
                    let mut m = 0;
                    for &c in set {
                        let k = core_ids.iter().position(|&x| x == c).ok_or(SchedError::UnknownCore {
                            task: t.name.clone(),
                            core: c,
                        })?;
                        m |= bit(k);
                    }
                    m
                }
            };
            for (k, c) in topo.cores.iter().enumerate() {
                if let Some(fns) = &c.accelerator_for {
                    if !fns.iter().any(|f| f == &t.function) {
                        mask &= !bit(k);
                    }
                }
            }
            let release = t
                .external_inputs
                .iter()
                .map(|&x| graph.inputs[x].release)
                .max()
                .unwrap_or(0);
            tasks.push(TaskM {
                runtime: t.runtime,
                internal: t.internalsize,
                core_mask: mask,
                inputs: dedup(&t.inputs),
                outputs: t.outputs.clone(),
                release,
                preds: dedup(&graph.predecessors(t.id).collect::<Vec<_>>()),
            });
        }

        let mut tail = vec![0u64; tasks.len()];
        for &t in topo_order.iter().rev() {
            let mut after = 0;
            for &b in &tasks[t].outputs {
                let down = bufs[b].observers.iter().map(|&v| tail[v]).max().unwrap_or(0);
                after = after.max(bufs[b].min_cost + down);
            }
            tail[t] = tasks[t].runtime + after;
        }

        let mut mem_check = vec![false; mem_cap.len()];
        for (mi, cap) in mem_cap.iter().enumerate() {
            let mut worst: u128 = 0;
            for b in &bufs {
                if b.opts.iter().any(|o| o.mem == mi) {
                    worst += b.size as u128;
                }
            }
            for t in &tasks {
                if (0..ncores).any(|k| t.core_mask & bit(k) != 0 && core_l2[k] == mi) {
                    worst += t.internal as u128;
                }
            }
            mem_check[mi] = worst > *cap as u128;
        }

        let mut equations = Vec::new();
        for doc in &graph.bound_constraints {
            let mut sources = BTreeMap::new();
            for sym in doc.symbols() {
                let src = if sym == MAKESPAN_SYMBOL {
                    Src::Makespan
                } else if sym == graph.period_symbol {
                    Src::Const(graph.deadline.min(i64::MAX as u64) as i64)
                } else if let Some(v) = graph.symbol_values.get(sym) {
                    Src::Const(*v)
                } else {
                    let labeled: Vec<usize> = graph
                        .buffers
                        .iter()
                        .filter(|b| b.labels.iter().any(|l| l == sym))
                        .map(|b| b.id)
                        .collect();
                    let floor = graph
                        .inputs
                        .iter()
                        .filter(|x| x.labels.iter().any(|l| l == sym))
                        .map(|x| x.release as i64)
                        .max();
                    if labeled.is_empty() && floor.is_none() {
                        return Err(SchedError::UnboundSymbol {
                            doc: doc.name.clone(),
                            symbol: sym.to_string(),
                        });
                    }
                    Src::Labeled(labeled, floor.unwrap_or(0))
                };
                sources.insert(sym.to_string(), src);
            }
            equations.push(Equation {
                doc: doc.clone(),
                sources,
            });
        }

        // A buffer nobody reads is left where it was written whenever a free
        // pattern allows that on the definer's core.
        for (bi, b) in bufs.iter_mut().enumerate() {
            if !b.observers.is_empty() || equations.iter().any(|e| e.references(bi)) {
                continue;
            }
            let free: Vec<u64> = b.opts.iter().filter(|o| o.cost == 0).map(|o| o.def_mask).collect();
            b.opts
                .retain(|o| o.cost == 0 || !free.iter().any(|&f| f & o.def_mask == o.def_mask));
        }

        let mut m = Model {
            tasks,
            bufs,
            ncores,
            core_ids,
            core_l2,
            mem_cap,
            mem_check,
            pat_names: pat_global.iter().map(|&g| catalog.get(g).name.clone()).collect(),
            conflict,
            deadline: graph.deadline,
            lag: graph.max_start_lag,
            check_due: true,
            check_capacity: true,
            equations,
            topo_order,
            tail,
            sym: Vec::new(),
            equation_bufs: Vec::new(),
            twin_before: Vec::new(),
            task_names: graph.tasks.iter().map(|t| t.name.clone()).collect(),
            buf_names: graph.buffers.iter().map(|b| b.name.clone()).collect(),
        };
        m.sym = m.symmetry_classes();
        m.equation_bufs = (0..m.bufs.len())
            .map(|b| m.equations.iter().any(|e| e.references(b)))
            .collect();
        m.twin_before = m.twins();
        Ok(m)
    }

    /// Groups cores whose exchange maps the whole model onto itself. Only
    /// groups in which every pair is interchangeable are kept.
    #[allow(clippy::needless_range_loop)]
    fn symmetry_classes(&self) -> Vec<u64> {
        let n = self.ncores;
        let mut ok = vec![vec![false; n]; n];
        for i in 0..n {
            ok[i][i] = true;
            for j in i + 1..n {
                let s = self.swappable(i, j);
                ok[i][j] = s;
                ok[j][i] = s;
            }
        }
        let mut class = vec![usize::MAX; n];
        for i in 0..n {
            if class[i] != usize::MAX {
                continue;
            }
            class[i] = i;
            let mut members = vec![i];
            for j in i + 1..n {
                if class[j] == usize::MAX && members.iter().all(|&x| ok[x][j]) {
                    class[j] = i;
                    members.push(j);
                }
            }
        }
        (0..n)
            .map(|k| (0..n).filter(|&j| class[j] == class[k]).fold(0, |a, j| a | bit(j)))
            .collect()
    }

    fn swappable(&self, i: usize, j: usize) -> bool {
        let swap_mask = |m: u64| -> u64 {
            let (bi, bj) = (m >> i & 1, m >> j & 1);
            (m & !(bit(i) | bit(j))) | (bi << j) | (bj << i)
        };
        let (li, lj) = (self.core_l2[i], self.core_l2[j]);
        if li == lj || self.mem_cap[li] != self.mem_cap[lj] {
            return false;
        }
        if (0..self.ncores).any(|k| k != i && k != j && (self.core_l2[k] == li || self.core_l2[k] == lj)) {
            return false;
        }
        let swap_mem = |m: usize| {
            if m == li {
                lj
            } else if m == lj {
                li
            } else {
                m
            }
        };
        if self.tasks.iter().any(|t| swap_mask(t.core_mask) != t.core_mask) {
            return false;
        }
        let (ti, tj) = (format!("c#{}", self.core_ids[i]), format!("c#{}", self.core_ids[j]));
        let canon: Vec<String> = self.pat_names.iter().map(|p| canonical(p)).collect();
        let sigma: Vec<Option<usize>> = canon
            .iter()
            .map(|c| {
                let mapped: Vec<&str> = c
                    .split('.')
                    .map(|t| {
                        if t == ti {
                            tj.as_str()
                        } else if t == tj {
                            ti.as_str()
                        } else {
                            t
                        }
                    })
                    .collect();
                let mapped = mapped.join(".");
                canon.iter().position(|x| *x == mapped)
            })
            .collect();
        for b in &self.bufs {
            for o in &b.opts {
                let Some(sp) = sigma[o.pat] else { return false };
                let found = b.opts.iter().any(|q| {
                    q.pat == sp
                        && q.cost == o.cost
                        && q.def_mask == swap_mask(o.def_mask)
                        && q.obs_mask == swap_mask(o.obs_mask)
                        && q.mem == swap_mem(o.mem)
                });
                if !found {
                    return false;
                }
            }
        }
        let np = self.pat_names.len();
        for p in 0..np {
            for q in 0..np {
                match (sigma[p], sigma[q]) {
                    (Some(sp), Some(sq)) => {
                        if self.conflict[sp][sq] != self.conflict[p][q] {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
        }
        true
    }

    /// Tasks `t` and `u` are interchangeable when relabeling one as the
    /// other, together with their outputs, maps the model onto itself:
    /// same attributes, same input buffers, and outputs that pair up
    /// with equal size, options, timing and readers.
    fn interchangeable(&self, t: usize, u: usize) -> bool {
        let (a, b) = (&self.tasks[t], &self.tasks[u]);
        if a.runtime != b.runtime
            || a.internal != b.internal
            || a.core_mask != b.core_mask
            || a.release != b.release
            || a.outputs.len() != b.outputs.len()
        {
            return false;
        }
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v
        };
        if sorted(&a.inputs) != sorted(&b.inputs) {
            return false;
        }
        let same = |x: usize, y: usize| {
            let (p, q) = (&self.bufs[x], &self.bufs[y]);
            !self.equation_bufs[x]
                && !self.equation_bufs[y]
                && p.size == q.size
                && p.release == q.release
                && p.due == q.due
                && p.opts == q.opts
                && sorted(&p.observers) == sorted(&q.observers)
                && !p.observers.contains(&u)
                && !q.observers.contains(&t)
        };
        let mut used = vec![false; b.outputs.len()];
        a.outputs.iter().all(
            |&x| match (0..b.outputs.len()).find(|&j| !used[j] && same(x, b.outputs[j])) {
                Some(j) => {
                    used[j] = true;
                    true
                }
                None => false,
            },
        )
    }

    #[allow(clippy::needless_range_loop)]
    fn twins(&self) -> Vec<Option<usize>> {
        let n = self.tasks.len();
        let mut before = vec![None; n];
        let mut rep: Vec<(usize, usize)> = Vec::new(); // (representative, last member)
        for u in 0..n {
            match rep.iter_mut().find(|(r, _)| self.interchangeable(*r, u)) {
                Some((_, last)) => {
                    before[u] = Some(*last);
                    *last = u;
                }
                None => rep.push((u, u)),
            }
        }
        before
    }

    pub fn relax(&mut self, w: Witness) {
        match w {
            Witness::Deadline => self.deadline = u64::MAX,
            Witness::BufferDue => self.check_due = false,
            Witness::TimingEquation => self.equations.clear(),
            Witness::StartLag => self.lag = None,
            Witness::Capacity => self.check_capacity = false,
            Witness::Placement => {}
        }
    }

    /// Some task has no core, or some buffer no option its definer could
    /// use.
    pub fn trivially_infeasible(&self) -> bool {
        self.tasks.iter().any(|t| t.core_mask == 0)
            || self
                .bufs
                .iter()
                .any(|b| !b.opts.iter().any(|o| o.def_mask & self.tasks[b.definer].core_mask != 0))
    }

    pub fn equations_hold(&self, makespan: u64, arrival: &dyn Fn(usize) -> u64) -> bool {
        for eq in &self.equations {
            let mut assign: BTreeMap<String, i64> = BTreeMap::new();
            for (sym, src) in &eq.sources {
                let v = match src {
                    Src::Makespan => makespan as i64,
                    Src::Const(v) => *v,
                    Src::Labeled(bufs, floor) => bufs.iter().map(|&b| arrival(b) as i64).max().unwrap_or(0).max(*floor),
                };
                assign.insert(sym.clone(), v);
            }
            match crate::manifest::evaluate_timing_equation(&eq.doc, &assign) {
                Ok(true) => {}
                _ => return false,
            }
        }
        true
    }

    pub fn to_schedule(&self, s: &Sol) -> Schedule {
        Schedule {
            assignments: (0..self.tasks.len())
                .map(|t| TaskAssignment {
                    task: t,
                    name: self.task_names[t].clone(),
                    core: self.core_ids[s.core[t]],
                    start: s.start[t],
                    finish: s.start[t] + self.tasks[t].runtime,
                })
                .collect(),
            pattern_choice: (0..self.bufs.len())
                .map(|b| {
                    let o = &self.bufs[b].opts[s.choice[b]];
                    TransferChoice {
                        buffer: b,
                        name: self.buf_names[b].clone(),
                        pattern: self.pat_names[o.pat].clone(),
                        start: s.tstart[b],
                        duration: o.cost,
                    }
                })
                .collect(),
            makespan: s.makespan,
        }
    }
}

fn dedup(v: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(v.len());
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}
