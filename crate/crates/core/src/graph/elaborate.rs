use std::collections::{BTreeMap, HashMap};

use super::{Buffer, GraphError, GraphInput, TaskGraph, TaskInstance};
use crate::dsl::{eval_shape, Direction, Expr, FlowDef, Instantiation, StreamDecl, ValidatedFlows};
use crate::manifest::{FunctionMetadata, PatternCatalog};

#[derive(Debug)]
struct Cell {
    name: String,
    external: bool,
    definer: Option<usize>,
    observers: Vec<usize>,
    labels: Vec<String>,
}

/// Row-major view onto cells.
#[derive(Debug, Clone)]
struct Tensor {
    shape: Vec<usize>,
    cells: Vec<usize>,
}

impl Tensor {
    /// Fixes the leading dimensions to the given 1-based indices.
    fn slice(&self, idx: &[usize]) -> Tensor {
        let mut offset = 0;
        let mut stride: usize = self.shape.iter().product();
        for (k, &i) in idx.iter().enumerate() {
            stride /= self.shape[k];
            offset += (i - 1) * stride;
        }
        let rest = self.shape[idx.len()..].to_vec();
        let len: usize = rest.iter().product();
        Tensor {
            shape: rest,
            cells: self.cells[offset..offset + len].to_vec(),
        }
    }
}

struct Task {
    name: String,
    function: String,
    inputs: Vec<usize>,
    external_inputs: Vec<usize>,
    outputs: Vec<usize>,
}

struct Elab<'a> {
    flows: &'a ValidatedFlows,
    meta: HashMap<&'a str, &'a FunctionMetadata>,
    cells: Vec<Cell>,
    tasks: Vec<Task>,
    stack: Vec<String>,
}

fn index_suffix(shape: &[usize], mut flat: usize) -> String {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k] + 1;
        flat /= shape[k];
    }
    idx.iter().map(|i| format!("[{i}]")).collect()
}

impl<'a> Elab<'a> {
    fn new_tensor(&mut self, path: &str, decl: &StreamDecl, external: bool) -> Result<Tensor, GraphError> {
        let shape = eval_shape(decl, &self.flows.symbols).ok_or_else(|| GraphError::Shape(decl.name.clone()))?;
        let len: usize = shape.iter().product();
        let mut cells = Vec::with_capacity(len);
        for flat in 0..len {
            cells.push(self.cells.len());
            self.cells.push(Cell {
                name: format!("{path}/{}{}", decl.name, index_suffix(&shape, flat)),
                external,
                definer: None,
                observers: Vec::new(),
                labels: decl.labels.clone(),
            });
        }
        Ok(Tensor { shape, cells })
    }

    fn add_labels(&mut self, t: &Tensor, labels: &[String]) {
        for &c in &t.cells {
            for l in labels {
                if !self.cells[c].labels.contains(l) {
                    self.cells[c].labels.push(l.clone());
                }
            }
        }
    }

    fn expand_flow(
        &mut self,
        flow: &'a FlowDef,
        path: &str,
        mut env: HashMap<String, Tensor>,
    ) -> Result<(), GraphError> {
        if self.stack.contains(&flow.name) {
            return Err(GraphError::Recursive(flow.name.clone()));
        }
        self.stack.push(flow.name.clone());
        for decl in &flow.internals {
            let t = self.new_tensor(path, decl, false)?;
            env.insert(decl.name.clone(), t);
        }
        for inst in &flow.instantiations {
            self.expand_instantiation(flow, inst, path, &env)?;
        }
        self.stack.pop();
        Ok(())
    }

    fn expand_instantiation(
        &mut self,
        flow: &'a FlowDef,
        inst: &'a Instantiation,
        path: &str,
        env: &HashMap<String, Tensor>,
    ) -> Result<(), GraphError> {
        let syms = &self.flows.symbols;
        let ranges: Vec<(i64, i64)> = inst
            .iterators
            .iter()
            .map(|it| {
                let lo = syms.eval(&it.lower).unwrap_or(1);
                let hi = syms.eval(&it.upper).unwrap_or(0);
                (lo, hi)
            })
            .collect();
        if ranges.iter().any(|(lo, hi)| hi < lo) {
            return Ok(());
        }
        let mut point: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            self.expand_point(flow, inst, path, env, &point)?;
            // odometer, last iterator fastest
            let mut k = point.len();
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                if point[k] < ranges[k].1 {
                    point[k] += 1;
                    for j in k + 1..point.len() {
                        point[j] = ranges[j].0;
                    }
                    break;
                }
            }
        }
    }

    fn expand_point(
        &mut self,
        flow: &'a FlowDef,
        inst: &'a Instantiation,
        path: &str,
        env: &HashMap<String, Tensor>,
        point: &[i64],
    ) -> Result<(), GraphError> {
        let vars: BTreeMap<&str, i64> = inst
            .iterators
            .iter()
            .zip(point)
            .map(|(it, v)| (it.var.as_str(), *v))
            .collect();
        let inst_path = if point.is_empty() {
            format!("{path}/{}", inst.callee)
        } else {
            let vals: Vec<String> = point.iter().map(i64::to_string).collect();
            format!("{path}/{}[{}]", inst.callee, vals.join(","))
        };
        let mut bound: Vec<(&'a str, Tensor, Option<&'a StreamDecl>)> = Vec::new();
        for b in &inst.bindings {
            let base = env
                .get(&b.actual.stream)
                .ok_or_else(|| GraphError::Malformed(format!("unbound stream `{}`", b.actual.stream)))?;
            let idx: Vec<usize> = b
                .actual
                .indices
                .iter()
                .map(|e| match e {
                    Expr::Int(v) => *v as usize,
                    Expr::Sym(s) => vars[s.as_str()] as usize,
                })
                .collect();
            bound.push((b.formal.as_str(), base.slice(&idx), flow.stream(&b.actual.stream)));
        }

        if let Some(callee) = self.flows.get(&inst.callee) {
            let mut sub_env = HashMap::new();
            for p in &callee.params {
                let Some((_, t, _)) = bound.iter().find(|(f, _, _)| *f == p.name) else {
                    return Err(GraphError::UnboundParam {
                        flow: callee.name.clone(),
                        param: p.name.clone(),
                        path: inst_path,
                    });
                };
                self.add_labels(t, &p.labels);
                sub_env.insert(p.name.clone(), t.clone());
            }
            return self.expand_flow(callee, &inst_path, sub_env);
        }

        if !self.meta.contains_key(inst.callee.as_str()) {
            return Err(GraphError::MissingMetadata {
                callee: inst.callee.clone(),
                path: inst_path,
            });
        }
        let tid = self.tasks.len();
        let mut task = Task {
            name: inst_path.clone(),
            function: inst.callee.clone(),
            inputs: Vec::new(),
            external_inputs: Vec::new(),
            outputs: Vec::new(),
        };
        for (formal, t, decl) in bound {
            let is_output = if formal.ends_with("_in") {
                false
            } else if formal.ends_with("_out") {
                true
            } else {
                match decl.map(|d| d.direction) {
                    Some(Direction::In) => false,
                    Some(Direction::Out) => true,
                    _ => {
                        return Err(GraphError::AmbiguousDirection {
                            callee: inst.callee.clone(),
                            formal: formal.to_string(),
                        })
                    }
                }
            };
            for &c in &t.cells {
                let cell = &mut self.cells[c];
                if is_output {
                    if cell.external {
                        return Err(GraphError::WritesInput {
                            task: inst_path.clone(),
                            stream: cell.name.clone(),
                        });
                    }
                    if cell.definer.is_some() {
                        return Err(GraphError::DoubleDefinition(cell.name.clone()));
                    }
                    cell.definer = Some(tid);
                    task.outputs.push(c);
                } else {
                    if !cell.observers.contains(&tid) {
                        cell.observers.push(tid);
                    }
                    if cell.external {
                        task.external_inputs.push(c);
                    } else {
                        task.inputs.push(c);
                    }
                }
            }
        }
        self.tasks.push(task);
        Ok(())
    }
}

/// Expands `entry` into one slot's worth of leaf tasks and buffers.
///
/// Every instantiation is unrolled over the full iterator cross product,
/// composite flows are inlined, and every defined stream element becomes
/// one buffer sized by its definer's `elementsize`. The returned graph has
/// `deadline = u64::MAX` until [`super::bind_timing`] runs.
pub fn elaborate(
    flows: &ValidatedFlows,
    entry: &str,
    metadata: &[FunctionMetadata],
    catalog: &PatternCatalog,
) -> Result<TaskGraph, GraphError> {
    let root = flows
        .get(entry)
        .ok_or_else(|| GraphError::UnknownFlow(entry.to_string()))?;
    let mut el = Elab {
        flows,
        meta: metadata.iter().map(|m| (m.name.as_str(), m)).collect(),
        cells: Vec::new(),
        tasks: Vec::new(),
        stack: Vec::new(),
    };
    let mut env = HashMap::new();
    for p in &root.params {
        let t = el.new_tensor(entry, p, p.direction == Direction::In)?;
        env.insert(p.name.clone(), t);
    }
    el.expand_flow(root, entry, env)?;

    let mut input_of_cell = HashMap::new();
    let mut buffer_of_cell = HashMap::new();
    let mut inputs = Vec::new();
    let mut buffers = Vec::new();
    for (ci, cell) in el.cells.iter().enumerate() {
        if cell.external {
            input_of_cell.insert(ci, inputs.len());
            inputs.push(GraphInput {
                name: cell.name.clone(),
                labels: cell.labels.clone(),
                release: 0,
            });
            continue;
        }
        let Some(definer) = cell.definer else {
            if !cell.observers.is_empty() {
                return Err(GraphError::ReadBeforeWrite(cell.name.clone()));
            }
            continue;
        };
        let function = &el.tasks[definer].function;
        let meta = el.meta[function.as_str()];
        let mut allowed: Vec<String> = Vec::new();
        for p in &meta.available_patterns {
            let idx = catalog.resolve(p).ok_or_else(|| GraphError::UnresolvedPattern {
                function: function.clone(),
                pattern: p.clone(),
            })?;
            let name = &catalog.get(idx).name;
            if !allowed.contains(name) {
                allowed.push(name.clone());
            }
        }
        if allowed.is_empty() {
            return Err(GraphError::NoPatterns(cell.name.clone()));
        }
        buffer_of_cell.insert(ci, buffers.len());
        buffers.push(Buffer {
            id: buffers.len(),
            name: cell.name.clone(),
            size: meta.elementsize,
            definer,
            observers: cell.observers.clone(),
            allowed_patterns: allowed,
            labels: cell.labels.clone(),
            release: None,
            due: None,
        });
    }

    let tasks: Vec<TaskInstance> = el
        .tasks
        .iter()
        .enumerate()
        .map(|(id, t)| {
            let meta = el.meta[t.function.as_str()];
            TaskInstance {
                id,
                name: t.name.clone(),
                function: t.function.clone(),
                runtime: meta.runtime,
                internalsize: meta.internalsize,
                inputs: t.inputs.iter().map(|c| buffer_of_cell[c]).collect(),
                external_inputs: t.external_inputs.iter().map(|c| input_of_cell[c]).collect(),
                outputs: t.outputs.iter().map(|c| buffer_of_cell[c]).collect(),
                allowed_cores: None,
            }
        })
        .collect();

    let mut g = TaskGraph::empty(u64::MAX);
    g.tasks = tasks;
    g.buffers = buffers;
    g.inputs = inputs;
    g.topological_order()?;
    debug_assert!(g.check_consistency().is_ok());
    Ok(g)
}
