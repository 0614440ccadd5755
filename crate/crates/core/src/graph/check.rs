use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TaskGraph;
use crate::manifest::{HardwareTopology, PatternCatalog};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StaticFinding {
    /// A task reads a buffer nobody defines.
    ReadBeforeWrite { task: String, buffer: String },
    /// No dependency path leads from a graph input to the task.
    Unreachable { task: String },
    /// The buffer cannot fit in any memory its patterns may use.
    GuaranteedOverflow { buffer: String, size: u64, capacity: u64 },
    /// The task's working set exceeds every L2 it could run beside.
    InternalOverflow { task: String, size: u64, capacity: u64 },
}

impl fmt::Display for StaticFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaticFinding::ReadBeforeWrite { task, buffer } => {
                write!(f, "read before write: `{task}` reads undefined `{buffer}`")
            }
            StaticFinding::Unreachable { task } => write!(f, "unreachable task `{task}`"),
            StaticFinding::GuaranteedOverflow { buffer, size, capacity } => write!(
                f,
                "guaranteed overflow: buffer `{buffer}` is {size} B but the largest usable memory holds {capacity} B"
            ),
            StaticFinding::InternalOverflow { task, size, capacity } => write!(
                f,
                "guaranteed overflow: task `{task}` needs {size} B scratch but the largest L2 holds {capacity} B"
            ),
        }
    }
}

/// Checks that need no schedule. Tolerates graphs that fail
/// [`TaskGraph::check_consistency`] and reports dangling reads instead of
/// panicking.
pub fn check_static(graph: &TaskGraph, topo: &HardwareTopology, catalog: &PatternCatalog) -> Vec<StaticFinding> {
    let mut out = Vec::new();
    let n = graph.tasks.len();

    for t in &graph.tasks {
        for &b in &t.inputs {
            let defined = graph
                .buffers
                .get(b)
                .is_some_and(|buf| buf.definer < n && graph.tasks[buf.definer].outputs.contains(&b));
            if !defined {
                let buffer = graph.buffers.get(b).map_or_else(|| format!("#{b}"), |x| x.name.clone());
                out.push(StaticFinding::ReadBeforeWrite {
                    task: t.name.clone(),
                    buffer,
                });
            }
        }
    }

    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = graph
        .tasks
        .iter()
        .filter(|t| !t.external_inputs.is_empty())
        .map(|t| t.id)
        .collect();
    for &t in &queue {
        reached[t] = true;
    }
    while let Some(t) = queue.pop_front() {
        for &b in &graph.tasks[t].outputs {
            let Some(buf) = graph.buffers.get(b) else { continue };
            for &o in &buf.observers {
                if o < n && !reached[o] {
                    reached[o] = true;
                    queue.push_back(o);
                }
            }
        }
    }
    for (i, t) in graph.tasks.iter().enumerate() {
        if !reached[i] {
            out.push(StaticFinding::Unreachable { task: t.name.clone() });
        }
    }

    for b in &graph.buffers {
        let anchored: Option<u64> = b
            .allowed_patterns
            .iter()
            .filter_map(|p| catalog.by_name(p))
            .flat_map(|p| [&p.defining_memory, &p.observing_memory])
            .filter_map(|m| topo.memory(m).map(|m| m.capacity))
            .max();
        let capacity = anchored.unwrap_or_else(|| topo.max_capacity());
        if b.size > capacity {
            out.push(StaticFinding::GuaranteedOverflow {
                buffer: b.name.clone(),
                size: b.size,
                capacity,
            });
        }
    }

    let l2_max = topo
        .cores
        .iter()
        .filter_map(|c| topo.memory(&c.l2).map(|m| m.capacity))
        .max()
        .unwrap_or(0);
    for t in &graph.tasks {
        if t.internalsize > l2_max {
            out.push(StaticFinding::InternalOverflow {
                task: t.name.clone(),
                size: t.internalsize,
                capacity: l2_max,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Buffer, GraphInput, TaskInstance};
    use crate::manifest::generate_patterns_from_topology;

    const MB: u64 = 1_000_000;

    fn task(id: usize, inputs: Vec<usize>, ext: Vec<usize>, outputs: Vec<usize>) -> TaskInstance {
        TaskInstance {
            id,
            name: format!("t{id}"),
            function: "f".into(),
            runtime: 10,
            internalsize: 0,
            inputs,
            external_inputs: ext,
            outputs,
            allowed_cores: None,
        }
    }

    fn buffer(id: usize, definer: usize, observers: Vec<usize>, size: u64) -> Buffer {
        Buffer {
            id,
            name: format!("b{id}"),
            size,
            definer,
            observers,
            allowed_patterns: vec!["pipeline.c_0.L3_0".into()],
            labels: vec![],
            release: None,
            due: None,
        }
    }

    fn chain(size: u64) -> TaskGraph {
        let mut g = TaskGraph::empty(1000);
        g.inputs.push(GraphInput {
            name: "in".into(),
            labels: vec![],
            release: 0,
        });
        g.tasks = vec![task(0, vec![], vec![0], vec![0]), task(1, vec![0], vec![], vec![])];
        g.buffers = vec![buffer(0, 0, vec![1], size)];
        g
    }

    fn topo() -> HardwareTopology {
        let mut t = HardwareTopology::uniform(1, 8 * MB, 8 * MB);
        t.memories.retain(|m| m.id != "DDR_0");
        t
    }

    #[test]
    fn clean_chain() {
        let t = topo();
        assert!(check_static(&chain(MB), &t, &generate_patterns_from_topology(&t)).is_empty());
    }

    #[test]
    fn ten_mb_buffer_overflows_eight_mb() {
        let t = topo();
        let f = check_static(&chain(10 * MB), &t, &generate_patterns_from_topology(&t));
        assert_eq!(
            f,
            vec![StaticFinding::GuaranteedOverflow {
                buffer: "b0".into(),
                size: 10 * MB,
                capacity: 8 * MB
            }]
        );
    }

    #[test]
    fn unreachable_task() {
        let t = topo();
        let mut g = chain(1);
        g.tasks.push(task(2, vec![], vec![], vec![]));
        let f = check_static(&g, &t, &generate_patterns_from_topology(&t));
        assert_eq!(f, vec![StaticFinding::Unreachable { task: "t2".into() }]);
    }

    #[test]
    fn dangling_read() {
        let t = topo();
        let mut g = chain(1);
        g.tasks[1].inputs.push(7);
        let f = check_static(&g, &t, &generate_patterns_from_topology(&t));
        assert!(matches!(&f[0], StaticFinding::ReadBeforeWrite { buffer, .. } if buffer == "#7"));
    }
}
