//! Seeded random instances small enough for [`super::brute_force_oracle`],
//! and random tightenings of them for monotonicity checks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ORACLE_MAX_CORES, ORACLE_MAX_PATTERNS, ORACLE_MAX_TASKS};
use crate::graph::{Buffer, GraphInput, TaskGraph, TaskInstance, MAKESPAN_SYMBOL};
use crate::manifest::{
    generate_patterns_from_topology, parse_chain, ClassCost, HardwareTopology, PatternCatalog, TimingEquationDoc,
};

/// Upper bound on dispatch-space leaves (orders x cores x patterns) of a
/// generated instance, so the oracle stays fast.
pub const MAX_LEAVES: u128 = 300_000;

#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: TaskGraph,
    pub topo: HardwareTopology,
    pub catalog: PatternCatalog,
}

/// Number of topological orders of `g` (at most 2^n states, n <= 20).
pub fn count_linear_extensions(g: &TaskGraph) -> u128 {
    let n = g.tasks.len();
    assert!(n <= 20, "too many tasks to count orders");
    let preds: Vec<u32> = (0..n)
        .map(|t| g.predecessors(t).fold(0u32, |m, p| m | 1 << p))
        .collect();
    let mut ways = vec![0u128; 1 << n];
    ways[0] = 1;
    for set in 0..(1usize << n) {
        if ways[set] == 0 {
            continue;
        }
        for (t, &p) in preds.iter().enumerate() {
            if set >> t & 1 == 0 && (p as usize) & set == p as usize {
                ways[set | 1 << t] += ways[set];
            }
        }
    }
    ways[(1 << n) - 1]
}

/// Rough size of the oracle's search space.
pub fn dispatch_leaves(inst: &Instance) -> u128 {
    let k = inst.topo.cores.len() as u128;
    let cores = k.pow(inst.graph.tasks.len() as u32);
    let pats: u128 = inst
        .graph
        .buffers
        .iter()
        .map(|b| b.allowed_patterns.len().max(1) as u128)
        .product();
    count_linear_extensions(&inst.graph) * cores * pats
}

/// A random instance within the oracle's limits. Same seed, same instance.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let inst = draw(&mut rng);
        if dispatch_leaves(&inst) <= MAX_LEAVES {
            return inst;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng) -> Instance {
    let ncores = ORACLE_MAX_CORES;
    let mut topo = HardwareTopology::uniform(ncores, rng.gen_range(600..=2000), rng.gen_range(800..=3000));
    topo.pattern_costs.pipeline = ClassCost {
        base: rng.gen_range(0..=15),
        bandwidth: None,
    };
    topo.pattern_costs.l2tol2 = ClassCost {
        base: rng.gen_range(5..=40),
        bandwidth: Some(rng.gen_range(8..=32)),
    };
    topo.pattern_costs.big_delay = ClassCost {
        base: rng.gen_range(30..=120),
        bandwidth: Some(rng.gen_range(4..=16)),
    };
    let catalog = generate_patterns_from_topology(&topo);
    let names: Vec<String> = catalog.patterns().iter().map(|p| p.name.clone()).collect();

    let n = rng.gen_range(2..=ORACLE_MAX_TASKS);
    let mut g = TaskGraph::empty(u64::MAX);
    g.inputs.push(GraphInput {
        name: "in".into(),
        labels: vec![],
        release: rng.gen_range(0..=40),
    });
    for t in 0..n {
        let allowed_cores = rng.gen_bool(0.15).then(|| BTreeSet::from([rng.gen_range(0..ncores)]));
        g.tasks.push(TaskInstance {
            id: t,
            name: format!("t{t}"),
            function: format!("f{}", t % 3),
            runtime: rng.gen_range(10..=200),
            internalsize: if rng.gen_bool(0.3) { rng.gen_range(50..=400) } else { 0 },
            inputs: vec![],
            external_inputs: if t == 0 || rng.gen_bool(0.15) { vec![0] } else { vec![] },
            outputs: vec![],
            allowed_cores,
        });
    }
    for t in 0..n {
        let nout = if t + 1 == n {
            rng.gen_range(0..=1)
        } else {
            rng.gen_range(1..=2)
        };
        for _ in 0..nout {
            let later: Vec<usize> = (t + 1..n).collect();
            let k = rng.gen_range(0..=later.len().min(2));
            let observers: Vec<usize> = later.choose_multiple(rng, k).copied().collect();
            let allowed_patterns = pick_patterns(rng, &names);
            let id = g.buffers.len();
            for &o in &observers {
                g.tasks[o].inputs.push(id);
            }
            g.tasks[t].outputs.push(id);
            g.buffers.push(Buffer {
                id,
                name: format!("b{id}"),
                size: rng.gen_range(16..=600),
                definer: t,
                observers,
                allowed_patterns,
                labels: vec![],
                release: rng.gen_bool(0.1).then(|| rng.gen_range(0..=300)),
                due: None,
            });
        }
    }
    let work: u64 = g.tasks.iter().map(|t| t.runtime).sum();
    if rng.gen_bool(0.3) {
        g.deadline = rng.gen_range(work * 2 / 3..=work + 200);
    }
    if rng.gen_bool(0.3) {
        g.max_start_lag = Some(rng.gen_range(0..=150));
    }
    if !g.buffers.is_empty() && rng.gen_bool(0.2) {
        let b = rng.gen_range(0..g.buffers.len());
        g.buffers[b].due = Some(rng.gen_range(work / 3..=work * 3 / 2));
    }
    if !g.buffers.is_empty() && rng.gen_bool(0.2) {
        let b = rng.gen_range(0..g.buffers.len());
        g.buffers[b].labels.push("mark".into());
        g.symbol_values
            .insert("limit".into(), rng.gen_range(work / 2..=work * 2) as i64);
        g.bound_constraints.push(equation(
            "mark_by_limit",
            "A + 10 <= B",
            &[("A", "mark"), ("B", "limit")],
        ));
    }
    if rng.gen_bool(0.1) {
        g.symbol_values
            .insert("span_cap".into(), rng.gen_range(work * 2 / 3..=work * 3 / 2) as i64);
        g.bound_constraints.push(equation(
            "span_cap",
            "A <= B",
            &[("A", MAKESPAN_SYMBOL), ("B", "span_cap")],
        ));
    }
    Instance {
        graph: g,
        topo,
        catalog,
    }
}

/// Either a few arbitrary patterns, or one class on every core (so the
/// definer is free to move) plus maybe one extra.
fn pick_patterns(rng: &mut ChaCha8Rng, names: &[String]) -> Vec<String> {
    if rng.gen_bool(0.4) {
        let np = rng.gen_range(1..=ORACLE_MAX_PATTERNS);
        return names.choose_multiple(rng, np).cloned().collect();
    }
    let class_of = |n: &String| n.split('.').next().unwrap_or_default().to_string();
    let pick = names.choose(rng).expect("catalog is not empty");
    let suffix: Vec<&str> = pick.split('.').skip(2).collect();
    let mut out: Vec<String> = names
        .iter()
        .filter(|n| class_of(n) == class_of(pick) && n.split('.').skip(2).collect::<Vec<_>>() == suffix)
        .take(ORACLE_MAX_PATTERNS)
        .cloned()
        .collect();
    if out.len() < ORACLE_MAX_PATTERNS && rng.gen_bool(0.3) {
        if let Some(extra) = names
            .iter()
            .filter(|n| !out.contains(n))
            .collect::<Vec<_>>()
            .choose(rng)
        {
            out.push((*extra).clone());
        }
    }
    out
}

fn equation(name: &str, text: &str, bind: &[(&str, &str)]) -> TimingEquationDoc {
    TimingEquationDoc {
        name: name.into(),
        equation: text.into(),
        chain: parse_chain(text).expect("fixed equation parses"),
        bindings: bind
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<BTreeMap<_, _>>(),
    }
}

/// A tightened copy of `inst`: every schedule valid for the result is
/// valid for `inst` too. Applies one to three random restrictions.
pub fn random_restriction(inst: &Instance, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = inst.clone();
    let steps = rng.gen_range(1..=3);
    for _ in 0..steps {
        let g = &mut out.graph;
        let work: u64 = g.tasks.iter().map(|t| t.runtime).sum();
        match rng.gen_range(0..6) {
            0 => {
                let d = rng.gen_range(work / 3..=work + 300);
                g.deadline = g.deadline.min(d);
            }
            1 => {
                let l = rng.gen_range(0..=120);
                g.max_start_lag = Some(g.max_start_lag.map_or(l, |x| x.min(l)));
            }
            2 if !g.buffers.is_empty() => {
                let b = rng.gen_range(0..g.buffers.len());
                let d = rng.gen_range(work / 4..=work + 200);
                g.buffers[b].due = Some(g.buffers[b].due.map_or(d, |x| x.min(d)));
            }
            3 if !g.buffers.is_empty() => {
                let b = rng.gen_range(0..g.buffers.len());
                let pats = &mut g.buffers[b].allowed_patterns;
                if pats.len() > 1 {
                    let i = rng.gen_range(0..pats.len());
                    pats.remove(i);
                }
            }
            4 => {
                let t = rng.gen_range(0..g.tasks.len());
                let ncores = out.topo.cores.len();
                let cur: BTreeSet<usize> = g.tasks[t]
                    .allowed_cores
                    .clone()
                    .unwrap_or_else(|| (0..ncores).collect());
                let keep: Vec<usize> = cur.iter().copied().collect();
                if let Some(&c) = keep.choose(&mut rng) {
                    g.tasks[t].allowed_cores = Some(BTreeSet::from([c]));
                }
            }
            _ => {
                let m = rng.gen_range(0..out.topo.memories.len());
                let cap = &mut out.topo.memories[m].capacity;
                *cap = *cap * rng.gen_range(50..=95) / 100;
            }
        }
    }
    out
}

/// Copies of existing tasks (same inputs, duplicated outputs) and extra
/// outputs nobody reads, added to a random instance while it stays within
/// the oracle's limits.
pub fn with_twins(inst: &Instance, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7717);
    let mut cur = inst.clone();
    for _ in 0..3 {
        let mut g = cur.graph.clone();
        if g.tasks.is_empty() {
            break;
        }
        let t = rng.gen_range(0..g.tasks.len());
        if rng.gen_bool(0.3) {
            let b = g.buffers.len();
            let pats = g.buffers.iter().find(|x| x.definer == t).map_or_else(
                || vec![cur.catalog.patterns()[0].name.clone()],
                |x| x.allowed_patterns.clone(),
            );
            g.buffers.push(Buffer {
                id: b,
                name: format!("{}/unread", g.tasks[t].name),
                size: rng.gen_range(1..=200),
                definer: t,
                observers: Vec::new(),
                allowed_patterns: pats,
                labels: Vec::new(),
                release: None,
                due: None,
            });
            g.tasks[t].outputs.push(b);
        } else {
            if g.tasks.len() >= ORACLE_MAX_TASKS {
                break;
            }
            let u = g.tasks.len();
            let mut twin = g.tasks[t].clone();
            twin.id = u;
            twin.name = format!("{}'", twin.name);
            twin.outputs.clear();
            for &b in &g.tasks[t].inputs.clone() {
                if !g.buffers[b].observers.contains(&u) {
                    g.buffers[b].observers.push(u);
                }
            }
            for &b in &g.tasks[t].outputs.clone() {
                let nb = g.buffers.len();
                let mut copy = g.buffers[b].clone();
                copy.id = nb;
                copy.name = format!("{}'", copy.name);
                copy.definer = u;
                copy.labels.clear();
                for &v in &copy.observers {
                    g.tasks[v].inputs.push(nb);
                }
                g.buffers.push(copy);
                twin.outputs.push(nb);
            }
            g.tasks.push(twin);
        }
        let next = Instance {
            graph: g,
            topo: cur.topo.clone(),
            catalog: cur.catalog.clone(),
        };
        if dispatch_leaves(&next) > MAX_LEAVES {
            break;
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let a = random_instance(7);
        let b = random_instance(7);
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.topo, b.topo);
    }

    #[test]
    fn within_oracle_limits() {
        for s in 0..40 {
            let i = random_instance(s);
            assert!(i.graph.tasks.len() <= ORACLE_MAX_TASKS);
            assert!(i
                .graph
                .buffers
                .iter()
                .all(|b| b.allowed_patterns.len() <= ORACLE_MAX_PATTERNS));
            assert!(dispatch_leaves(&i) <= MAX_LEAVES);
            i.graph.check_consistency().unwrap();
        }
    }

    #[test]
    fn linear_extensions_of_small_shapes() {
        let mut g = TaskGraph::empty(1);
        for t in 0..3 {
            g.tasks.push(TaskInstance {
                id: t,
                name: format!("t{t}"),
                function: "f".into(),
                runtime: 1,
                internalsize: 0,
                inputs: vec![],
                external_inputs: vec![],
                outputs: vec![],
                allowed_cores: None,
            });
        }
        assert_eq!(count_linear_extensions(&g), 6);
        g.buffers.push(Buffer {
            id: 0,
            name: "b".into(),
            size: 1,
            definer: 0,
            observers: vec![1, 2],
            allowed_patterns: vec![],
            labels: vec![],
            release: None,
            due: None,
        });
        g.tasks[0].outputs.push(0);
        g.tasks[1].inputs.push(0);
        g.tasks[2].inputs.push(0);
        assert_eq!(count_linear_extensions(&g), 2);
    }
}
