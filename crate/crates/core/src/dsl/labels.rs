use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::FlowDef;
use crate::diag::{Diagnostic, Diagnostics};

/// Where a label points: a stream declared in a particular flow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelTarget {
    pub flow: String,
    pub stream: String,
}

pub type LabelMap = BTreeMap<String, LabelTarget>;

pub fn collect_labels(defs: &[FlowDef]) -> Result<LabelMap, Diagnostics> {
    let mut map = LabelMap::new();
    let mut diags = Vec::new();
    for flow in defs {
        for decl in flow.params.iter().chain(flow.internals.iter()) {
            for label in &decl.labels {
                let target = LabelTarget {
                    flow: flow.name.clone(),
                    stream: decl.name.clone(),
                };
                if let Some(prev) = map.get(label) {
                    diags.push(Diagnostic::error(
                        decl.line,
                        1,
                        format!("duplicate label `{label}`: already on `{}.{}`", prev.flow, prev.stream),
                    ));
                } else {
                    map.insert(label.clone(), target);
                }
            }
        }
    }
    if diags.is_empty() {
        Ok(map)
    } else {
        Err(Diagnostics(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_flow_source;

    #[test]
    fn no_labels() {
        let defs = parse_flow_source("Flow f\n  a : stream{type = in}\n").unwrap();
        assert!(collect_labels(&defs).unwrap().is_empty());
    }

    #[test]
    fn single_label() {
        let defs = parse_flow_source("Flow f\n  a : stream{type = in, label = fronthaul_in}\n").unwrap();
        let m = collect_labels(&defs).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(
            m["fronthaul_in"],
            LabelTarget {
                flow: "f".into(),
                stream: "a".into()
            }
        );
    }

    #[test]
    fn duplicate_label() {
        let src = "Flow f\n  a : stream{type = in, label = x}\n  b : stream{type = in, label = x}\n";
        let defs = parse_flow_source(src).unwrap();
        let err = collect_labels(&defs).unwrap_err();
        assert!(err.0[0].message.contains("duplicate label `x`"));
    }
}
