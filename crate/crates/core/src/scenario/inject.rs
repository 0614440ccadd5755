use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{Buffer, TaskGraph, TaskInstance};
use crate::manifest::{PatternCatalog, PatternClass};

/// Picks buffers or tasks of a graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    All,
    /// Buffers by exact name.
    Buffers(Vec<String>),
    /// Tasks by exact name; as a buffer selector, their outputs.
    Tasks(Vec<String>),
    /// Tasks running this leaf function; as a buffer selector, their outputs.
    Function(String),
    /// Everything under an instance path such as `top/dl[0]`.
    Prefix(String),
    SizeBelow(u64),
    SizeAtLeast(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Injection {
    /// Keep only DDR round-trip patterns for the selected buffers.
    EvictBuffer {
        target: Selector,
    },
    PinTasks {
        target: Selector,
        cores: BTreeSet<usize>,
    },
    StartLag {
        cycles: u64,
    },
    /// Copy a top-level instance `count` times.
    AddFlow {
        target: Selector,
        #[serde(default = "one")]
        count: u32,
    },
    TightenDeadline {
        cycles: u64,
    },
}

fn one() -> u32 {
    1
}

fn under(name: &str, prefix: &str) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|r| r.is_empty() || r.starts_with('/'))
}

fn select_tasks(g: &TaskGraph, sel: &Selector) -> Result<Vec<usize>, String> {
    let hit: Vec<usize> = match sel {
        Selector::All => (0..g.tasks.len()).collect(),
        Selector::Tasks(names) => {
            let mut v = Vec::new();
            for n in names {
                let t = g
                    .tasks
                    .iter()
                    .position(|t| &t.name == n)
                    .ok_or_else(|| format!("no task `{n}`"))?;
                v.push(t);
            }
            v
        }
        Selector::Function(f) => g.tasks.iter().filter(|t| &t.function == f).map(|t| t.id).collect(),
        Selector::Prefix(p) => g.tasks.iter().filter(|t| under(&t.name, p)).map(|t| t.id).collect(),
        Selector::Buffers(_) | Selector::SizeBelow(_) | Selector::SizeAtLeast(_) => {
            return Err(format!("{sel:?} does not select tasks"));
        }
    };
    if hit.is_empty() && *sel != Selector::All {
        return Err(format!("{sel:?} matches no task"));
    }
    Ok(hit)
}

fn select_buffers(g: &TaskGraph, sel: &Selector) -> Result<Vec<usize>, String> {
    let outputs_of =
        |ts: Vec<usize>| -> Vec<usize> { ts.into_iter().flat_map(|t| g.tasks[t].outputs.clone()).collect() };
    Ok(match sel {
        Selector::All => (0..g.buffers.len()).collect(),
        Selector::Buffers(names) => {
            let mut v = Vec::new();
            for n in names {
                let b = g
                    .buffers
                    .iter()
                    .position(|b| &b.name == n)
                    .ok_or_else(|| format!("no buffer `{n}`"))?;
                v.push(b);
            }
            v
        }
        Selector::Tasks(_) | Selector::Function(_) => outputs_of(select_tasks(g, sel)?),
        Selector::Prefix(p) => g.buffers.iter().filter(|b| under(&b.name, p)).map(|b| b.id).collect(),
        Selector::SizeBelow(n) => g.buffers.iter().filter(|b| b.size < *n).map(|b| b.id).collect(),
        Selector::SizeAtLeast(n) => g.buffers.iter().filter(|b| b.size >= *n).map(|b| b.id).collect(),
    })
}

/// Applies injections in order to a copy of `graph`. Apart from
/// `ADD_FLOW`, every injection only shrinks allowed sets or tightens
/// bounds.
pub fn apply_injections(
    graph: &TaskGraph,
    injections: &[Injection],
    catalog: &PatternCatalog,
) -> Result<TaskGraph, String> {
    let mut g = graph.clone();
    for inj in injections {
        match inj {
            Injection::EvictBuffer { target } => {
                for b in select_buffers(&g, target)? {
                    let buf = &mut g.buffers[b];
                    buf.allowed_patterns.retain(|p| {
                        let name = catalog.by_name(p).map_or(p.as_str(), |q| q.name.as_str());
                        PatternClass::of(name) == Some(PatternClass::BigDelay)
                    });
                    if buf.allowed_patterns.is_empty() {
                        return Err(format!("buffer `{}` has no DDR pattern to evict to", buf.name));
                    }
                }
            }
            Injection::PinTasks { target, cores } => {
                for t in select_tasks(&g, target)? {
                    let task = &mut g.tasks[t];
                    task.allowed_cores = Some(match &task.allowed_cores {
                        Some(cur) => cur.intersection(cores).copied().collect(),
                        None => cores.clone(),
                    });
                }
            }
            Injection::StartLag { cycles } => {
                g.max_start_lag = Some(g.max_start_lag.map_or(*cycles, |l| l.min(*cycles)));
            }
            Injection::TightenDeadline { cycles } => g.deadline = g.deadline.min(*cycles),
            Injection::AddFlow { target, count } => {
                let Selector::Prefix(p) = target else {
                    return Err("ADD_FLOW needs a `prefix` target".into());
                };
                select_tasks(&g, target)?;
                for i in 1..=*count {
                    copy_flow(&mut g, p, &format!("{p}+{i}"));
                }
            }
        }
    }
    Ok(g)
}

/// Duplicates every task and buffer under `prefix`, renaming the prefix to
/// `as_prefix`. The copy reads the same outside buffers and external
/// inputs, and outside readers of the original also read the copy.
fn copy_flow(g: &mut TaskGraph, prefix: &str, as_prefix: &str) {
    let rename = |n: &str| format!("{as_prefix}{}", &n[prefix.len()..]);
    let tasks: Vec<usize> = g
        .tasks
        .iter()
        .filter(|t| under(&t.name, prefix))
        .map(|t| t.id)
        .collect();
    let inside: BTreeSet<usize> = tasks.iter().copied().collect();
    let mut task_map = BTreeMap::new();
    for &t in &tasks {
        task_map.insert(t, g.tasks.len() + task_map.len());
    }
    let bufs: Vec<usize> = g
        .buffers
        .iter()
        .filter(|b| inside.contains(&b.definer))
        .map(|b| b.id)
        .collect();
    let mut buf_map = BTreeMap::new();
    for &b in &bufs {
        buf_map.insert(b, g.buffers.len() + buf_map.len());
    }
    let remap_buf = |b: usize| *buf_map.get(&b).unwrap_or(&b);

    let mut new_tasks: Vec<TaskInstance> = Vec::new();
    for &t in &tasks {
        let src = &g.tasks[t];
        new_tasks.push(TaskInstance {
            id: task_map[&t],
            name: rename(&src.name),
            inputs: src.inputs.iter().map(|&b| remap_buf(b)).collect(),
            outputs: src.outputs.iter().map(|&b| remap_buf(b)).collect(),
            ..src.clone()
        });
    }
    let mut new_bufs: Vec<Buffer> = Vec::new();
    for &b in &bufs {
        let src = &g.buffers[b];
        let name = if under(&src.name, prefix) {
            rename(&src.name)
        } else {
            format!("{}+", src.name)
        };
        new_bufs.push(Buffer {
            id: buf_map[&b],
            name,
            definer: task_map[&src.definer],
            observers: src.observers.iter().map(|o| *task_map.get(o).unwrap_or(o)).collect(),
            ..src.clone()
        });
    }
    // outside observers of copied buffers
    for nb in &new_bufs {
        for &o in &nb.observers {
            if o < g.tasks.len() {
                g.tasks[o].inputs.push(nb.id);
            }
        }
    }
    // outside buffers read by the copy
    for nt in &new_tasks {
        for &b in &nt.inputs {
            if b < g.buffers.len() {
                g.buffers[b].observers.push(nt.id);
            }
        }
    }
    g.tasks.extend(new_tasks);
    g.buffers.extend(new_bufs);
}

/// Task counts per top-level instance path (`top/inst[..]`); tasks placed
/// directly in the entry flow are not counted.
pub fn top_level_instances(g: &TaskGraph) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in &g.tasks {
        let parts: Vec<&str> = t.name.splitn(3, '/').collect();
        if parts.len() == 3 {
            *out.entry(format!("{}/{}", parts[0], parts[1])).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{generate_patterns_from_topology, HardwareTopology};

    fn cat() -> PatternCatalog {
        generate_patterns_from_topology(&HardwareTopology::uniform(2, 1 << 20, 1 << 24))
    }

    fn graph() -> TaskGraph {
        let mut g = TaskGraph::empty(1_000_000);
        let names = ["top/a[0]/x", "top/a[0]/y", "top/sink"];
        for (i, n) in names.iter().enumerate() {
            g.tasks.push(TaskInstance {
                id: i,
                name: n.to_string(),
                function: ["X", "Y", "S"][i].into(),
                runtime: 10,
                internalsize: 0,
                inputs: vec![],
                external_inputs: vec![],
                outputs: vec![],
                allowed_cores: None,
            });
        }
        let pats = vec![
            "pipeline.c_0.L3_0".to_string(),
            "big_delay.c_0.L3_0.DDR_0.accL3_0".to_string(),
            "big_delay.c_1.L3_0.DDR_0.accL3_0".to_string(),
        ];
        for (id, (d, o, size)) in [(0, 1, 100u64), (1, 2, 20_000)].into_iter().enumerate() {
            g.buffers.push(Buffer {
                id,
                name: format!("top/a[0]/b{id}"),
                size,
                definer: d,
                observers: vec![o],
                allowed_patterns: pats.clone(),
                labels: vec![],
                release: None,
                due: None,
            });
            g.tasks[d].outputs.push(id);
            g.tasks[o].inputs.push(id);
        }
        g
    }

    #[test]
    fn empty_injections_are_identity() {
        assert_eq!(apply_injections(&graph(), &[], &cat()).unwrap(), graph());
    }

    #[test]
    fn evict_small_keeps_ddr_patterns() {
        let g = apply_injections(
            &graph(),
            &[Injection::EvictBuffer {
                target: Selector::SizeBelow(10 * 1024),
            }],
            &cat(),
        )
        .unwrap();
        assert_eq!(g.buffers[0].allowed_patterns.len(), 2);
        assert!(g.buffers[0].allowed_patterns.iter().all(|p| p.starts_with("big_delay")));
        assert_eq!(g.buffers[1].allowed_patterns.len(), 3);
    }

    #[test]
    fn evict_without_ddr_is_an_error() {
        let mut g = graph();
        g.buffers[0].allowed_patterns.truncate(1);
        let r = apply_injections(
            &g,
            &[Injection::EvictBuffer {
                target: Selector::Function("X".into()),
            }],
            &cat(),
        );
        assert!(r.unwrap_err().contains("top/a[0]/b0"));
    }

    #[test]
    fn pin_all_tasks() {
        let g = apply_injections(
            &graph(),
            &[Injection::PinTasks {
                target: Selector::All,
                cores: [0].into(),
            }],
            &cat(),
        )
        .unwrap();
        assert!(g.tasks.iter().all(|t| t.allowed_cores == Some([0].into())));
    }

    #[test]
    fn unknown_selector_is_an_error() {
        let r = apply_injections(
            &graph(),
            &[Injection::PinTasks {
                target: Selector::Function("nope".into()),
                cores: [0].into(),
            }],
            &cat(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn add_flow_copies_instance() {
        let g = apply_injections(
            &graph(),
            &[Injection::AddFlow {
                target: Selector::Prefix("top/a[0]".into()),
                count: 1,
            }],
            &cat(),
        )
        .unwrap();
        g.check_consistency().unwrap();
        assert_eq!(g.tasks.len(), 5);
        assert_eq!(g.tasks[3].name, "top/a[0]+1/x");
        assert_eq!(g.buffers.len(), 4);
        // the sink now reads both copies of b1
        assert_eq!(g.tasks[2].inputs.len(), 2);
        assert_eq!(top_level_instances(&g).len(), 2);
    }

    #[test]
    fn yaml_shape() {
        let text = "- kind: EVICT_BUFFER\n  target: {function: X}\n- kind: PIN_TASKS\n  target: all\n  cores: [0, 1]\n- kind: ADD_FLOW\n  target: {prefix: \"top/a[0]\"}\n";
        let v: Vec<Injection> = serde_yaml::from_str(text).unwrap();
        assert_eq!(
            v[0],
            Injection::EvictBuffer {
                target: Selector::Function("X".into())
            }
        );
        assert!(matches!(
            &v[1],
            Injection::PinTasks {
                target: Selector::All,
                ..
            }
        ));
        assert!(matches!(&v[2], Injection::AddFlow { count: 1, .. }));
    }
}
