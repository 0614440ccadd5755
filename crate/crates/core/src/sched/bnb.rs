//! Depth-first branch and bound over the dispatch space.
//!
//! Pruning:
//! * lower bounds from the partial makespan, earliest start plus tail of
//!   every unplaced task, and average core load;
//! * two adjacent dispatches that touch different cores, are not
//!   dependent and use non-conflicting patterns commute, so only the order
//!   with the smaller task id first is explored;
//! * among interchangeable cores with nothing placed yet, only the lowest
//!   is tried;
//! * a state whose key (see [`State::key`]) was already searched with a
//!   partial makespan no larger is skipped.
//!
//! The root is expanded into a frontier of subtrees that are searched
//! independently (in parallel when enabled), each against the heuristic
//! seed's makespan. Subtrees never share bounds, so the result does not
//! depend on thread timing.

use std::collections::HashMap;
use std::time::Instant;

use super::model::{Model, Sol};
use super::SolveOptions;
use crate::par::map_vec;

const FRONTIER_TARGET: usize = 48;
const FRONTIER_MAX_DEPTH: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub placed: Vec<bool>,
    pub nplaced: usize,
    pub start: Vec<u64>,
    pub core: Vec<usize>,
    pub core_free: Vec<u64>,
    pub used: u64,
    pub choice: Vec<usize>,
    pub tstart: Vec<u64>,
    /// Per task: cores still compatible with the patterns of its inputs.
    pub acc_mask: Vec<u64>,
    pub preds_left: Vec<u32>,
    pub makespan: u64,
    pub last: Option<usize>,
    /// Placed transfers with nonzero duration: (start, end, pattern).
    pub busy: Vec<(u64, u64, usize)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Child {
    pub task: usize,
    pub core: usize,
    pub combo: Vec<usize>,
    pub start: u64,
    pub tstarts: Vec<u64>,
    /// Latest finish or transfer end this dispatch produces.
    pub end: u64,
}

const UNSET: usize = usize::MAX;

impl State {
    pub fn root(m: &Model) -> Self {
        let n = m.tasks.len();
        Self {
            placed: vec![false; n],
            nplaced: 0,
            start: vec![0; n],
            core: vec![UNSET; n],
            core_free: vec![0; m.ncores],
            used: 0,
            choice: vec![UNSET; m.bufs.len()],
            tstart: vec![0; m.bufs.len()],
            acc_mask: m.tasks.iter().map(|t| t.core_mask).collect(),
            preds_left: m.tasks.iter().map(|t| t.preds.len() as u32).collect(),
            makespan: 0,
            last: None,
            busy: Vec::new(),
        }
    }

    pub fn done(&self) -> bool {
        self.nplaced == self.placed.len()
    }

    pub fn arrival(&self, m: &Model, b: usize) -> u64 {
        self.tstart[b] + m.bufs[b].opts[self.choice[b]].cost
    }

    pub fn eligible<'a>(&'a self, m: &'a Model) -> impl Iterator<Item = usize> + 'a {
        (0..self.placed.len()).filter(move |&t| {
            !self.placed[t] && self.preds_left[t] == 0 && m.twin_before[t].is_none_or(|w| self.placed[w])
        })
    }

    pub fn to_sol(&self) -> Sol {
        Sol {
            start: self.start.clone(),
            core: self.core.clone(),
            choice: self.choice.clone(),
            tstart: self.tstart.clone(),
            makespan: self.makespan,
        }
    }

    /// Appends every admissible dispatch of task `t` to `out`, less those
    /// that only reorder the previous dispatch.
    pub fn expand(&self, m: &Model, t: usize, out: &mut Vec<Child>) {
        self.expand_from(m, t, self.last, out);
    }

    /// Like [`State::expand`] without the reordering prune, which is only
    /// sound when the other order is searched too.
    pub fn expand_all(&self, m: &Model, t: usize, out: &mut Vec<Child>) {
        self.expand_from(m, t, None, out);
    }

    fn expand_from(&self, m: &Model, t: usize, last: Option<usize>, out: &mut Vec<Child>) {
        let task = &m.tasks[t];
        let mut ready = task.release;
        for &b in &task.inputs {
            ready = ready.max(self.arrival(m, b));
        }
        let mask = self.acc_mask[t] & task.core_mask;
        for k in 0..m.ncores {
            if mask >> k & 1 == 0 {
                continue;
            }
            if self.used >> k & 1 == 0 {
                let lower_fresh = m.sym[k] & !self.used & ((1u64 << k) - 1);
                if lower_fresh != 0 {
                    continue;
                }
            }
            let start = ready.max(self.core_free[k]);
            if let Some(lag) = m.lag {
                if start > ready.saturating_add(lag) {
                    continue;
                }
            }
            let finish = start + task.runtime;
            if finish > m.deadline {
                continue;
            }
            let mut combo = Vec::with_capacity(task.outputs.len());
            let mut tstarts = Vec::with_capacity(task.outputs.len());
            let mut extra: Vec<(usize, u64)> = Vec::new();
            let mut busy_extra: Vec<(u64, u64, usize)> = Vec::new();
            self.combos(
                m,
                t,
                k,
                last,
                start,
                finish,
                0,
                &mut combo,
                &mut tstarts,
                &mut extra,
                &mut busy_extra,
                finish,
                out,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn combos(
        &self,
        m: &Model,
        t: usize,
        k: usize,
        last: Option<usize>,
        start: u64,
        finish: u64,
        i: usize,
        combo: &mut Vec<usize>,
        tstarts: &mut Vec<u64>,
        extra: &mut Vec<(usize, u64)>,
        busy_extra: &mut Vec<(u64, u64, usize)>,
        end: u64,
        out: &mut Vec<Child>,
    ) {
        let outputs = &m.tasks[t].outputs;
        if i == outputs.len() {
            if let Some(p) = last {
                if t < p && self.commutes(m, p, t, k, busy_extra) {
                    return;
                }
            }
            out.push(Child {
                task: t,
                core: k,
                combo: combo.clone(),
                start,
                tstarts: tstarts.clone(),
                end,
            });
            return;
        }
        let b = outputs[i];
        let buf = &m.bufs[b];
        'opt: for (oi, o) in buf.opts.iter().enumerate() {
            if o.def_mask >> k & 1 == 0 {
                continue;
            }
            for &v in &buf.observers {
                let mut mask = self.acc_mask[v] & m.tasks[v].core_mask & o.obs_mask;
                for &(w, em) in extra.iter() {
                    if w == v {
                        mask &= em;
                    }
                }
                if mask == 0 {
                    continue 'opt;
                }
            }
            let lo = finish.max(buf.release);
            let ts = if o.cost == 0 {
                lo
            } else {
                earliest_fit(m, lo, o.cost, o.pat, &self.busy, busy_extra)
            };
            let arrive = ts + o.cost;
            if arrive > m.deadline {
                continue;
            }
            if m.check_due {
                if let Some(d) = buf.due {
                    if arrive > d {
                        continue;
                    }
                }
            }
            let n_extra = extra.len();
            for &v in &buf.observers {
                extra.push((v, o.obs_mask));
            }
            if o.cost > 0 {
                busy_extra.push((ts, arrive, o.pat));
            }
            combo.push(oi);
            tstarts.push(ts);
            self.combos(
                m,
                t,
                k,
                last,
                start,
                finish,
                i + 1,
                combo,
                tstarts,
                extra,
                busy_extra,
                end.max(arrive),
                out,
            );
            combo.pop();
            tstarts.pop();
            if o.cost > 0 {
                busy_extra.pop();
            }
            extra.truncate(n_extra);
        }
    }

    /// Whether dispatching `p` (already placed last) and then `c` on core
    /// `k` gives the same schedule as the reverse order.
    fn commutes(&self, m: &Model, p: usize, c: usize, k: usize, c_busy: &[(u64, u64, usize)]) -> bool {
        if self.core[p] == k || m.tasks[c].preds.contains(&p) {
            return false;
        }
        for &b in &m.tasks[p].outputs {
            let o = &m.bufs[b].opts[self.choice[b]];
            if o.cost == 0 {
                continue;
            }
            if c_busy.iter().any(|&(_, _, q)| m.conflict[o.pat][q]) {
                return false;
            }
        }
        true
    }

    pub fn apply(&self, m: &Model, ch: &Child) -> State {
        let mut s = self.clone();
        let t = ch.task;
        let task = &m.tasks[t];
        s.placed[t] = true;
        s.nplaced += 1;
        s.start[t] = ch.start;
        s.core[t] = ch.core;
        let finish = ch.start + task.runtime;
        s.core_free[ch.core] = finish;
        s.used |= 1 << ch.core;
        for (i, &b) in task.outputs.iter().enumerate() {
            let o = &m.bufs[b].opts[ch.combo[i]];
            s.choice[b] = ch.combo[i];
            s.tstart[b] = ch.tstarts[i];
            if o.cost > 0 {
                s.busy.push((ch.tstarts[i], ch.tstarts[i] + o.cost, o.pat));
            }
            for &v in &m.bufs[b].observers {
                s.acc_mask[v] &= o.obs_mask;
            }
        }
        // preds_left counts distinct predecessors; one may feed several buffers
        let mut seen: Vec<usize> = Vec::new();
        for &b in &task.outputs {
            for &v in &m.bufs[b].observers {
                if !seen.contains(&v) {
                    seen.push(v);
                    s.preds_left[v] -= 1;
                }
            }
        }
        s.makespan = s.makespan.max(ch.end);
        s.last = Some(t);
        s
    }

    /// Residency and scratch usage stay within capacity in every memory
    /// this dispatch touched. Residency intervals only grow as the search
    /// deepens, so a breach here persists in every completion.
    pub fn capacity_ok(&self, m: &Model, t: usize) -> bool {
        if !m.check_capacity {
            return true;
        }
        let task = &m.tasks[t];
        let mut mems: Vec<usize> = vec![m.core_l2[self.core[t]]];
        for &b in task.inputs.iter().chain(&task.outputs) {
            mems.push(m.bufs[b].opts[self.choice[b]].mem);
        }
        mems.sort_unstable();
        mems.dedup();
        mems.into_iter()
            .filter(|&mi| m.mem_check[mi])
            .all(|mi| self.peak(m, mi) <= m.mem_cap[mi])
    }

    fn peak(&self, m: &Model, mi: usize) -> u64 {
        let mut ev: Vec<(u64, i128)> = Vec::new();
        for (b, buf) in m.bufs.iter().enumerate() {
            if self.choice[b] == UNSET || buf.size == 0 {
                continue;
            }
            let o = &buf.opts[self.choice[b]];
            if o.mem != mi {
                continue;
            }
            let s = self.tstart[b];
            let mut e = s + o.cost;
            for &v in &buf.observers {
                if self.placed[v] {
                    e = e.max(self.start[v] + m.tasks[v].runtime);
                }
            }
            if e > s {
                ev.push((s, buf.size as i128));
                ev.push((e, -(buf.size as i128)));
            }
        }
        for (t, task) in m.tasks.iter().enumerate() {
            if self.placed[t] && task.internal > 0 && m.core_l2[self.core[t]] == mi {
                ev.push((self.start[t], task.internal as i128));
                ev.push((self.start[t] + task.runtime, -(task.internal as i128)));
            }
        }
        sweep_peak(&mut ev)
    }

    pub fn lower_bound(&self, m: &Model) -> u64 {
        let mut lb = self.makespan;
        let n = m.tasks.len();
        let mut est = vec![0u64; n];
        for &t in &m.topo_order {
            if self.placed[t] {
                continue;
            }
            let task = &m.tasks[t];
            let mask = self.acc_mask[t] & task.core_mask;
            if mask == 0 {
                return u64::MAX;
            }
            let mut e = task.release;
            let mut core_min = u64::MAX;
            for k in 0..m.ncores {
                if mask >> k & 1 == 1 {
                    core_min = core_min.min(self.core_free[k]);
                }
            }
            e = e.max(core_min);
            // Unplaced predecessors: (task, est, runtime, arrival if on
            // this task's core, arrival otherwise).
            let mut pend: Vec<(usize, u64, u64, u64, u64)> = Vec::new();
            for &b in &task.inputs {
                let buf = &m.bufs[b];
                if self.choice[b] != UNSET {
                    e = e.max(self.arrival(m, b));
                    continue;
                }
                let d = buf.definer;
                let r = m.tasks[d].runtime;
                let ready = (est[d] + r).max(buf.release);
                let near = ready + buf.min_cost;
                let far = ready.saturating_add(buf.split_cost);
                match pend.iter_mut().find(|p| p.0 == d) {
                    Some(p) => {
                        p.3 = p.3.max(near);
                        p.4 = p.4.max(far);
                    }
                    None => pend.push((d, est[d], r, near, far)),
                }
            }
            e = e.max(colocated_ready(&pend));
            est[t] = e;
            lb = lb.max(e + m.tail[t]);
        }
        // Tasks with at least q cycles of tail after them all finish, and
        // then q more cycles pass.
        let mut open: Vec<(u64, u64)> = (0..n)
            .filter(|&t| !self.placed[t])
            .map(|t| (m.tail[t] - m.tasks[t].runtime, m.tasks[t].runtime))
            .collect();
        open.sort_unstable_by(|a, b| b.cmp(a));
        let mut free = self.core_free.clone();
        free.sort_unstable();
        let mut work: u128 = 0;
        for (i, &(q, r)) in open.iter().enumerate() {
            work += r as u128;
            if open.get(i + 1).is_some_and(|nx| nx.0 == q) {
                continue;
            }
            lb = lb.max(waterfill(&free, work).saturating_add(q));
        }
        lb
    }

    /// Everything the rest of the search depends on besides the partial
    /// makespan. Equal keys have identical completions.
    pub fn key(&self, m: &Model) -> Vec<u64> {
        let n = self.placed.len();
        let mut k = Vec::with_capacity(8 + 2 * m.ncores);
        for w in self.placed.chunks(64) {
            k.push(w.iter().enumerate().fold(0u64, |a, (i, &p)| a | (p as u64) << i));
        }
        k.push(self.used);
        k.push(self.last.map_or(u64::MAX, |t| t as u64));
        k.extend_from_slice(&self.core_free);
        let floor = self.core_free.iter().copied().min().unwrap_or(0);
        let full = m.check_capacity && m.mem_check.iter().any(|&c| c);
        for (b, buf) in m.bufs.iter().enumerate() {
            if self.choice[b] == UNSET {
                continue;
            }
            let live = buf.observers.iter().any(|&v| !self.placed[v]);
            if live || full || m.equation_bufs[b] {
                k.extend_from_slice(&[b as u64, self.choice[b] as u64, self.tstart[b]]);
            }
        }
        k.push(u64::MAX);
        if full {
            for t in 0..n {
                if self.placed[t] {
                    k.extend_from_slice(&[self.start[t], self.core[t] as u64]);
                }
            }
            k.push(u64::MAX);
        }
        let mut busy: Vec<&(u64, u64, usize)> = self.busy.iter().filter(|iv| iv.1 > floor).collect();
        busy.sort_unstable();
        for &&(s, e, p) in &busy {
            k.extend_from_slice(&[s, e, p as u64]);
        }
        k
    }

    pub fn leaf_ok(&self, m: &Model) -> bool {
        m.equations.is_empty() || m.equations_hold(self.makespan, &|b| self.arrival(m, b))
    }
}

/// Lower bound on when a task's unplaced predecessors have delivered,
/// minimized over which of them share the task's core: those run one
/// after another there, the rest pay a cross-core transfer.
fn colocated_ready(pend: &[(usize, u64, u64, u64, u64)]) -> u64 {
    const MAX_EXACT: usize = 10;
    if pend.is_empty() {
        return 0;
    }
    if pend.len() > MAX_EXACT {
        return pend.iter().map(|p| p.3).max().unwrap_or(0);
    }
    let mut best = u64::MAX;
    for set in 0u32..(1 << pend.len()) {
        let mut v: u64 = 0;
        let mut first = u64::MAX;
        let mut work: u64 = 0;
        for (i, p) in pend.iter().enumerate() {
            if set >> i & 1 == 1 {
                v = v.max(p.3);
                first = first.min(p.1);
                work += p.2;
            } else {
                v = v.max(p.4);
            }
        }
        if set.count_ones() > 1 {
            v = v.max(first + work);
        }
        best = best.min(v);
    }
    best
}

/// Earliest `T` with `sum(max(0, T - free[k])) >= work`; `free` sorted.
fn waterfill(free: &[u64], work: u128) -> u64 {
    if free.is_empty() {
        return u64::MAX;
    }
    let mut acc: u128 = work;
    for k in 0..free.len() {
        // cores 0..=k are open at level free[k]; fill up to free[k + 1]
        acc += free[k] as u128;
        let level = acc.div_ceil(k as u128 + 1);
        if k + 1 == free.len() || level <= free[k + 1] as u128 {
            return level.min(u64::MAX as u128) as u64;
        }
    }
    unreachable!()
}

pub(crate) fn sweep_peak(ev: &mut [(u64, i128)]) -> u64 {
    ev.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cur: i128 = 0;
    let mut peak: i128 = 0;
    for &(_, d) in ev.iter() {
        cur += d;
        peak = peak.max(cur);
    }
    peak.max(0) as u64
}

/// Earliest start `>= lo` for a transfer of length `dur` on pattern `pat`
/// that avoids every conflicting placed transfer.
fn earliest_fit(m: &Model, lo: u64, dur: u64, pat: usize, a: &[(u64, u64, usize)], b: &[(u64, u64, usize)]) -> u64 {
    let mut iv: Vec<(u64, u64)> = a
        .iter()
        .chain(b)
        .filter(|&&(_, _, q)| m.conflict[pat][q])
        .map(|&(s, e, _)| (s, e))
        .collect();
    iv.sort_unstable();
    let mut t = lo;
    for (s, e) in iv {
        if e <= t {
            continue;
        }
        if s >= t + dur {
            break;
        }
        t = e;
    }
    t
}

/// Children of `s` in branching order.
pub(crate) fn children(m: &Model, s: &State) -> Vec<Child> {
    let mut out = Vec::new();
    let elig: Vec<usize> = s.eligible(m).collect();
    for t in elig {
        s.expand(m, t, &mut out);
    }
    out.sort_by(|a, b| (a.start, a.core, &a.combo, a.task).cmp(&(b.start, b.core, &b.combo, b.task)));
    out
}

pub(crate) struct SearchResult {
    pub best: Option<Sol>,
    pub complete: bool,
}

/// Transposition entries kept per subtree.
const MEMO_CAP: usize = 1 << 20;

struct Dfs<'a> {
    m: &'a Model,
    memo: HashMap<Vec<u64>, u64>,
    best: u64,
    sol: Option<Sol>,
    nodes: u64,
    limit: u64,
    deadline: Option<Instant>,
    aborted: bool,
}

impl Dfs<'_> {
    fn run(&mut self, s: &State) {
        if self.aborted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.limit
            || self
                .deadline
                .is_some_and(|d| self.nodes.is_multiple_of(256) && Instant::now() > d)
        {
            self.aborted = true;
            return;
        }
        if s.done() {
            if s.makespan < self.best && s.leaf_ok(self.m) {
                self.best = s.makespan;
                self.sol = Some(s.to_sol());
            }
            return;
        }
        let mut kids: Vec<(u64, u64, State)> = Vec::new();
        for ch in children(self.m, s) {
            if ch.end >= self.best {
                continue;
            }
            let ns = s.apply(self.m, &ch);
            if !ns.capacity_ok(self.m, ch.task) {
                continue;
            }
            let lb = ns.lower_bound(self.m);
            if lb < self.best {
                kids.push((lb, ch.end, ns));
            }
        }
        // most promising first, so good incumbents turn up early
        kids.sort_by_key(|k| (k.0, k.1));
        for (lb, _, ns) in kids {
            if lb >= self.best {
                break;
            }
            let key = ns.key(self.m);
            let full = self.memo.len() >= MEMO_CAP;
            match self.memo.get_mut(&key) {
                Some(seen) if *seen <= ns.makespan => continue,
                Some(seen) => *seen = ns.makespan,
                None if !full => {
                    self.memo.insert(key, ns.makespan);
                }
                None => {}
            }
            self.run(&ns);
            if self.aborted {
                return;
            }
        }
    }
}

/// Searches for a schedule strictly better than `seed`; returns the seed
/// if none exists. `complete` is false when a budget ran out.
pub(crate) fn search(m: &Model, seed: Option<Sol>, opts: &SolveOptions) -> SearchResult {
    let bound = seed.as_ref().map_or(u64::MAX, |s| s.makespan);
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    let root = State::root(m);
    if root.done() {
        return SearchResult {
            best: if root.leaf_ok(m) { Some(root.to_sol()) } else { None },
            complete: true,
        };
    }

    // Breadth-first frontier; leaves met on the way are kept as candidates.
    let mut frontier = vec![root];
    let mut leaves: Vec<Sol> = Vec::new();
    for _ in 0..FRONTIER_MAX_DEPTH {
        if frontier.len() >= FRONTIER_TARGET {
            break;
        }
        let mut next = Vec::new();
        for s in &frontier {
            for ch in children(m, s) {
                if ch.end >= bound {
                    continue;
                }
                let ns = s.apply(m, &ch);
                if !ns.capacity_ok(m, ch.task) || ns.lower_bound(m) >= bound {
                    continue;
                }
                if ns.done() {
                    if ns.leaf_ok(m) {
                        leaves.push(ns.to_sol());
                    }
                } else {
                    next.push(ns);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    let results = map_vec(&frontier, opts.parallelism, |s| {
        let mut d = Dfs {
            m,
            memo: HashMap::new(),
            best: bound,
            sol: None,
            nodes: 0,
            limit: opts.node_limit.max(1),
            deadline,
            aborted: false,
        };
        d.run(s);
        (d.sol, !d.aborted)
    });

    let mut best = seed;
    let mut complete = true;
    for l in leaves {
        if best.as_ref().is_none_or(|b| l.makespan < b.makespan) {
            best = Some(l);
        }
    }
    for (sol, done) in results {
        complete &= done;
        if let Some(s) = sol {
            if best.as_ref().is_none_or(|b| s.makespan < b.makespan) {
                best = Some(s);
            }
        }
    }
    SearchResult { best, complete }
}
