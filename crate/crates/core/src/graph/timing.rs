use std::collections::BTreeMap;

use super::{GraphError, TaskGraph};
use crate::dsl::LabelMap;
use crate::manifest::{ConstraintDoc, EqualityOp};

/// Equation symbol bound to the schedule's makespan.
pub const MAKESPAN_SYMBOL: &str = "makespan";

/// Deployment-side values that timing binding needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingContext {
    /// Deadline used when no document fixes the period.
    pub slot_budget: u64,
    pub period_symbol: String,
    pub max_start_lag: Option<u64>,
    pub assignments: BTreeMap<String, i64>,
}

impl TimingContext {
    pub fn new(slot_budget: u64) -> Self {
        Self {
            slot_budget,
            period_symbol: "modem_period".into(),
            max_start_lag: None,
            assignments: BTreeMap::new(),
        }
    }
}

/// Attaches timing documents to an elaborated graph.
///
/// An equality on the period symbol fixes the deadline. An equality on a
/// label constrains the labeled buffers (`le`/`equal` set a due time, `ge`
/// a release) or labeled graph inputs (`ge`/`equal` set their release).
/// Equation documents are kept for checking against each schedule.
pub fn bind_timing(
    mut graph: TaskGraph,
    docs: &[ConstraintDoc],
    labels: &LabelMap,
    ctx: &TimingContext,
) -> Result<TaskGraph, GraphError> {
    let period = &ctx.period_symbol;
    let mut equal_period: Option<(u64, &str)> = None;
    let mut le_period: Option<u64> = None;

    for doc in docs {
        let ConstraintDoc::Equality(eq) = doc else { continue };
        let timing_err = |message: String| GraphError::Timing {
            doc: eq.name.clone(),
            message,
        };
        if &eq.variable_name == period {
            match eq.op {
                EqualityOp::Equal => match equal_period {
                    Some((v, other)) if v != eq.value => {
                        return Err(GraphError::ContradictoryDeadline(format!(
                            "`{other}` sets {period} = {v} but `{}` sets {}",
                            eq.name, eq.value
                        )))
                    }
                    _ => equal_period = Some((eq.value, eq.name.as_str())),
                },
                EqualityOp::Le => le_period = Some(le_period.map_or(eq.value, |v| v.min(eq.value))),
                EqualityOp::Ge => return Err(timing_err(format!("`ge` cannot bound the period `{period}`"))),
            }
            continue;
        }
        let label = &eq.variable_name;
        if !labels.contains_key(label) {
            return Err(GraphError::LabelNotFound(label.clone()));
        }
        for b in graph.buffers.iter_mut().filter(|b| b.labels.contains(label)) {
            match eq.op {
                EqualityOp::Le => b.due = Some(b.due.map_or(eq.value, |d| d.min(eq.value))),
                EqualityOp::Ge => b.release = Some(b.release.map_or(eq.value, |r| r.max(eq.value))),
                EqualityOp::Equal => {
                    b.due = Some(b.due.map_or(eq.value, |d| d.min(eq.value)));
                    b.release = Some(b.release.map_or(eq.value, |r| r.max(eq.value)));
                }
            }
        }
        for x in graph.inputs.iter_mut().filter(|x| x.labels.contains(label)) {
            match eq.op {
                EqualityOp::Ge | EqualityOp::Equal => x.release = x.release.max(eq.value),
                EqualityOp::Le => {
                    return Err(timing_err(format!(
                        "input `{}` is available from its release; `le` does not apply",
                        x.name
                    )))
                }
            }
        }
    }

    graph.deadline = match (equal_period, le_period) {
        (Some((v, name)), Some(le)) if v > le => {
            return Err(GraphError::ContradictoryDeadline(format!(
                "`{name}` sets {period} = {v} above its upper bound {le}"
            )))
        }
        (Some((v, _)), _) => v,
        (None, Some(le)) => le,
        (None, None) => ctx.slot_budget,
    };
    graph.max_start_lag = ctx.max_start_lag;
    graph.period_symbol = period.clone();
    graph.symbol_values = ctx.assignments.clone();

    for doc in docs {
        let ConstraintDoc::Equation(e) = doc else { continue };
        for sym in e.symbols() {
            let known = sym == MAKESPAN_SYMBOL
                || sym == period
                || labels.contains_key(sym)
                || ctx.assignments.contains_key(sym);
            if !known {
                return Err(GraphError::Timing {
                    doc: e.name.clone(),
                    message: format!(
                        "symbol `{sym}` is neither `{MAKESPAN_SYMBOL}`, the period, a label, nor assigned in the deployment"
                    ),
                });
            }
        }
        graph.bound_constraints.push(e.clone());
    }
    Ok(graph)
}
