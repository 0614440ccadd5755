use std::fmt::Write;

use super::ast::*;

/// Renders flows back to source text that parses to an equal AST.
pub fn pretty_print(defs: &[FlowDef]) -> String {
    let mut out = String::new();
    for (i, f) in defs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "Flow {}", f.name).unwrap();
        for p in &f.params {
            out.push_str("  ");
            decl(&mut out, p);
        }
        for p in &f.internals {
            decl(&mut out, p);
        }
        for inst in &f.instantiations {
            out.push_str(&inst.callee);
            out.push('[');
            let mut items: Vec<String> = inst
                .iterators
                .iter()
                .map(|it| format!("{} = {}:{}", it.var, it.lower, it.upper))
                .collect();
            items.extend(inst.bindings.iter().map(|b| format!("{} = {}", b.formal, b.actual)));
            out.push_str(&items.join(", "));
            out.push_str("]\n");
        }
    }
    out
}

fn decl(out: &mut String, d: &StreamDecl) {
    write!(out, "{} : stream", d.name).unwrap();
    for dim in &d.shape {
        write!(out, "[{dim}]").unwrap();
    }
    let mut attrs = Vec::new();
    if d.explicit_type {
        attrs.push(format!("type = {}", d.direction.as_str()));
    }
    for l in &d.labels {
        attrs.push(format!("label = {l}"));
    }
    for (k, v) in &d.attributes {
        attrs.push(format!("{k} = {v}"));
    }
    if !attrs.is_empty() {
        write!(out, "{{{}}}", attrs.join(", ")).unwrap();
    }
    out.push('\n');
}
