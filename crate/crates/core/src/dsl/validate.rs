use std::collections::{BTreeMap, HashSet};

use super::ast::*;
use crate::diag::{Diagnostic, Diagnostics};

/// Flow definitions that passed [`validate_flows`] together with the symbol
/// table they were checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedFlows {
    pub defs: Vec<FlowDef>,
    pub symbols: SymbolTable,
}

impl ValidatedFlows {
    pub fn get(&self, name: &str) -> Option<&FlowDef> {
        self.defs.iter().find(|f| f.name == name)
    }
}

/// Evaluates the shape of a declared stream, or `None` if a symbol is missing
/// or a dimension is not positive.
pub fn eval_shape(decl: &StreamDecl, symbols: &SymbolTable) -> Option<Vec<usize>> {
    decl.shape
        .iter()
        .map(|e| symbols.eval(e).filter(|v| *v > 0).map(|v| v as usize))
        .collect()
}

pub fn validate_flows(defs: &[FlowDef], symbols: &SymbolTable) -> Result<ValidatedFlows, Diagnostics> {
    let mut diags = Vec::new();
    if let Err(msg) = symbols.check() {
        diags.push(Diagnostic::unlocated(msg));
    }
    let by_name: BTreeMap<&str, &FlowDef> = defs.iter().map(|f| (f.name.as_str(), f)).collect();

    for flow in defs {
        let mut seen = HashSet::new();
        for decl in flow.params.iter().chain(flow.internals.iter()) {
            if !seen.insert(decl.name.as_str()) {
                diags.push(Diagnostic::error(
                    decl.line,
                    1,
                    format!("stream `{}` declared twice in flow `{}`", decl.name, flow.name),
                ));
            }
            check_shape(decl, symbols, &mut diags);
        }
        for inst in &flow.instantiations {
            check_instantiation(flow, inst, symbols, &by_name, &mut diags);
        }
    }

    if diags.is_empty() {
        Ok(ValidatedFlows {
            defs: defs.to_vec(),
            symbols: symbols.clone(),
        })
    } else {
        Err(Diagnostics(diags))
    }
}

fn check_shape(decl: &StreamDecl, symbols: &SymbolTable, diags: &mut Vec<Diagnostic>) {
    for dim in &decl.shape {
        match symbols.eval(dim) {
            None => diags.push(Diagnostic::error(
                decl.line,
                1,
                format!("unresolved identifier `{dim}` in shape of `{}`", decl.name),
            )),
            Some(v) if v <= 0 => diags.push(Diagnostic::error(
                decl.line,
                1,
                format!("non-positive dimension {v} in shape of `{}`", decl.name),
            )),
            _ => {}
        }
    }
}

fn check_instantiation(
    flow: &FlowDef,
    inst: &Instantiation,
    symbols: &SymbolTable,
    flows: &BTreeMap<&str, &FlowDef>,
    diags: &mut Vec<Diagnostic>,
) {
    let line = inst.line;
    let mut iter_vars: BTreeMap<&str, (i64, i64)> = BTreeMap::new();
    for it in &inst.iterators {
        let lo = symbols.eval(&it.lower);
        let hi = symbols.eval(&it.upper);
        for (e, v) in [(&it.lower, lo), (&it.upper, hi)] {
            if v.is_none() {
                diags.push(Diagnostic::error(
                    line,
                    1,
                    format!("unresolved identifier `{e}` in bound of iterator `{}`", it.var),
                ));
            }
        }
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if lo < 1 || hi < lo {
                diags.push(Diagnostic::error(
                    line,
                    1,
                    format!(
                        "non-positive range {lo}:{hi} for iterator `{}` of `{}`",
                        it.var, inst.callee
                    ),
                ));
            }
            if iter_vars.insert(it.var.as_str(), (lo, hi)).is_some() {
                diags.push(Diagnostic::error(line, 1, format!("iterator `{}` bound twice", it.var)));
            }
        }
        if flow.stream(&it.var).is_some() {
            diags.push(Diagnostic::error(
                line,
                1,
                format!("iterator `{}` shadows a stream", it.var),
            ));
        }
    }

    let callee = flows.get(inst.callee.as_str()).copied();
    let mut formals = HashSet::new();
    for b in &inst.bindings {
        if !formals.insert(b.formal.as_str()) {
            diags.push(Diagnostic::error(
                line,
                1,
                format!("formal `{}` bound twice in `{}`", b.formal, inst.callee),
            ));
        }
        let Some(decl) = flow.stream(&b.actual.stream) else {
            diags.push(Diagnostic::error(
                line,
                1,
                format!("unresolved identifier `{}` in flow `{}`", b.actual.stream, flow.name),
            ));
            continue;
        };
        let shape = eval_shape(decl, symbols);
        if b.actual.indices.len() > decl.shape.len() {
            diags.push(Diagnostic::error(
                line,
                1,
                format!(
                    "shape arity mismatch: `{}` indexed with {} indices but declared with {} dimensions",
                    b.actual,
                    b.actual.indices.len(),
                    decl.shape.len()
                ),
            ));
            continue;
        }
        for (k, idx) in b.actual.indices.iter().enumerate() {
            let dim = shape.as_ref().map(|s| s[k] as i64);
            match idx {
                Expr::Sym(v) => match iter_vars.get(v.as_str()) {
                    None => diags.push(Diagnostic::error(
                        line,
                        1,
                        format!("unresolved identifier `{v}` in index of `{}`", b.actual),
                    )),
                    Some((_, hi)) => {
                        if let Some(d) = dim {
                            if *hi > d {
                                diags.push(Diagnostic::error(
                                    line,
                                    1,
                                    format!(
                                        "index `{v}` reaches {hi} but dimension {} of `{}` is {d}",
                                        k + 1,
                                        b.actual.stream
                                    ),
                                ));
                            }
                        }
                    }
                },
                Expr::Int(c) => {
                    if *c < 1 || dim.map(|d| *c > d).unwrap_or(false) {
                        diags.push(Diagnostic::error(
                            line,
                            1,
                            format!("constant index {c} out of range in `{}`", b.actual),
                        ));
                    }
                }
            }
        }
        if let Some(cf) = callee {
            match cf.param(&b.formal) {
                None => diags.push(Diagnostic::error(
                    line,
                    1,
                    format!("`{}` is not a parameter of flow `{}`", b.formal, cf.name),
                )),
                Some(formal) => {
                    let rest = shape.as_ref().map(|s| s[b.actual.indices.len()..].to_vec());
                    let want = eval_shape(formal, symbols);
                    if let (Some(rest), Some(want)) = (rest, want) {
                        if rest != want {
                            diags.push(Diagnostic::error(
                                line,
                                1,
                                format!(
                                    "shape arity mismatch: `{}` has shape {:?} but parameter `{}` of `{}` expects {:?}",
                                    b.actual, rest, formal.name, cf.name, want
                                ),
                            ));
                        }
                    }
                }
            }
        }
    }
    if callee.map(|c| c.name == flow.name).unwrap_or(false) {
        diags.push(Diagnostic::error(
            line,
            1,
            format!("flow `{}` instantiates itself", flow.name),
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_flow_source;

    fn syms() -> SymbolTable {
        SymbolTable::new().with("N", 2).with("M", 4)
    }

    #[test]
    fn arity_mismatch() {
        let src = "Flow f\n  s : stream[N]{type = in}\n  g[i = 1:N, j = 1:M, x = s[i][j]]\n";
        let defs = parse_flow_source(src).unwrap();
        let err = validate_flows(&defs, &syms()).unwrap_err();
        assert!(err.0.iter().any(|d| d.message.contains("arity mismatch")), "{err}");
    }

    #[test]
    fn empty_range() {
        let src = "Flow f\n  s : stream[N]{type = in}\n  g[i = 1:0, x = s[i]]\n";
        let defs = parse_flow_source(src).unwrap();
        let err = validate_flows(&defs, &syms()).unwrap_err();
        assert!(
            err.0.iter().any(|d| d.message.contains("non-positive range 1:0")),
            "{err}"
        );
    }

    #[test]
    fn unresolved_names() {
        let src = "Flow f\n  s : stream[K]{type = in}\n  g[x = t]\n";
        let defs = parse_flow_source(src).unwrap();
        let err = validate_flows(&defs, &syms()).unwrap_err();
        let msgs: Vec<_> = err.0.iter().map(|d| d.message.clone()).collect();
        assert!(msgs.iter().any(|m| m.contains("`K`")));
        assert!(msgs.iter().any(|m| m.contains("`t`")));
    }

    #[test]
    fn slice_binding_is_allowed() {
        let src = "Flow f\n  s : stream[N][M]{type = in}\n  g[i = 1:N, x = s[i]]\n";
        let defs = parse_flow_source(src).unwrap();
        validate_flows(&defs, &syms()).unwrap();
    }

    #[test]
    fn nested_flow_shape_must_match() {
        let src = "Flow top\n  s : stream[N][M]{type = in}\n  sub[i = 1:N, a = s[i]]\n\
                   Flow sub\n  a : stream[N]{type = in}\n  leaf[x = a]\n";
        let defs = parse_flow_source(src).unwrap();
        let err = validate_flows(&defs, &syms()).unwrap_err();
        assert!(err.0[0].message.contains("expects [2]"), "{err}");
    }
}
