use std::collections::BTreeMap;

use serde::Deserialize;
use serde_yaml::{Mapping, Value};

use super::equation::{eval_with_bindings, parse_chain, Chain};
use super::ManifestError;

pub const API_VERSION: &str = "rdsl/v0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EqualityOp {
    Equal,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingEqualityDoc {
    pub name: String,
    pub variable_name: String,
    pub op: EqualityOp,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TimingEquationDoc {
    pub name: String,
    pub equation: String,
    pub chain: Chain,
    /// Placeholder letter to symbol name (`C -> grid_period`).
    pub bindings: BTreeMap<String, String>,
}

impl TimingEquationDoc {
    /// Symbols the equation depends on, in binding order.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.bindings.values().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionMetadata {
    pub name: String,
    pub available_patterns: Vec<String>,
    pub elementsize: u64,
    pub internalsize: u64,
    pub runtime: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintDoc {
    Equality(TimingEqualityDoc),
    Equation(TimingEquationDoc),
    Function(FunctionMetadata),
}

/// Splits a `---` separated YAML stream into its non-empty documents.
pub(crate) fn yaml_documents(text: &str) -> Result<Vec<Value>, ManifestError> {
    let mut docs = Vec::new();
    for (i, de) in serde_yaml::Deserializer::from_str(text).enumerate() {
        let v = Value::deserialize(de).map_err(|e| ManifestError::Yaml {
            doc: i + 1,
            message: e.to_string(),
        })?;
        if !v.is_null() {
            docs.push(v);
        }
    }
    Ok(docs)
}

pub(crate) struct DocCtx<'a> {
    pub label: String,
    pub map: &'a Mapping,
}

impl<'a> DocCtx<'a> {
    pub fn new(index: usize, v: &'a Value) -> Result<Self, ManifestError> {
        let map = v.as_mapping().ok_or_else(|| ManifestError::Schema {
            doc: format!("document {index}"),
            message: "document is not a mapping".into(),
        })?;
        let name = map.get("metadata").and_then(|m| m.get("name")).and_then(Value::as_str);
        let label = match name {
            Some(n) => format!("document {index} (`{n}`)"),
            None => format!("document {index}"),
        };
        Ok(Self { label, map })
    }

    pub fn err(&self, message: impl Into<String>) -> ManifestError {
        ManifestError::Schema {
            doc: self.label.clone(),
            message: message.into(),
        }
    }

    pub fn missing(&self, field: &str) -> ManifestError {
        ManifestError::MissingField {
            doc: self.label.clone(),
            field: field.to_string(),
        }
    }

    pub fn str_field(&self, m: &Mapping, path: &str, key: &str) -> Result<String, ManifestError> {
        match m.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(self.err(format!("field `{path}` must be a string"))),
            None => Err(self.missing(path)),
        }
    }

    pub fn u64_field(&self, m: &Mapping, path: &str, key: &str) -> Result<u64, ManifestError> {
        match m.get(key) {
            Some(Value::Number(n)) => n
                .as_u64()
                .ok_or_else(|| self.err(format!("field `{path}` must be a non-negative integer"))),
            Some(_) => Err(self.err(format!("field `{path}` must be an integer"))),
            None => Err(self.missing(path)),
        }
    }

    /// Checks `apiVersion` and returns `(kind, metadata.name, spec)`.
    pub fn header(&self) -> Result<(String, String, &'a Mapping), ManifestError> {
        let api = self.str_field(self.map, "apiVersion", "apiVersion")?;
        if api != API_VERSION {
            return Err(ManifestError::UnknownApiVersion {
                doc: self.label.clone(),
                api_version: api,
            });
        }
        let kind = self.str_field(self.map, "kind", "kind")?;
        let meta = self
            .map
            .get("metadata")
            .and_then(Value::as_mapping)
            .ok_or_else(|| self.missing("metadata"))?;
        let name = self.str_field(meta, "metadata.name", "name")?;
        let spec = self
            .map
            .get("spec")
            .and_then(Value::as_mapping)
            .ok_or_else(|| self.missing("spec"))?;
        Ok((kind, name, spec))
    }

    pub fn unit(&self, spec: &Mapping) -> Result<(), ManifestError> {
        let unit = self.str_field(spec, "spec.unit", "unit")?;
        if unit != "clock" {
            return Err(self.err(format!("unsupported unit `{unit}` (only `clock`)")));
        }
        Ok(())
    }
}

pub fn parse_constraint_stream(text: &str) -> Result<Vec<ConstraintDoc>, ManifestError> {
    let docs = yaml_documents(text)?;
    let mut out = Vec::with_capacity(docs.len());
    for (i, v) in docs.iter().enumerate() {
        let ctx = DocCtx::new(i + 1, v)?;
        let (kind, name, spec) = ctx.header()?;
        let doc = match kind.as_str() {
            "timing equality" => ConstraintDoc::Equality(equality(&ctx, name, spec)?),
            "timing equation" => ConstraintDoc::Equation(equation(&ctx, name, spec)?),
            "SDK" => ConstraintDoc::Function(function(&ctx, name, spec)?),
            _ => {
                return Err(ManifestError::UnknownKind {
                    doc: ctx.label.clone(),
                    kind,
                })
            }
        };
        out.push(doc);
    }
    Ok(out)
}

fn equality(ctx: &DocCtx, name: String, spec: &Mapping) -> Result<TimingEqualityDoc, ManifestError> {
    let variable_name = ctx.str_field(spec, "spec.variable_name", "variable_name")?;
    let op = match ctx.str_field(spec, "spec.constraint", "constraint")?.as_str() {
        "equal" => EqualityOp::Equal,
        "le" => EqualityOp::Le,
        "ge" => EqualityOp::Ge,
        other => return Err(ctx.err(format!("unknown constraint `{other}`"))),
    };
    let value = match spec.get("value") {
        Some(Value::Number(n)) if n.as_u64().is_some() => n.as_u64().unwrap(),
        Some(Value::Number(_)) => return Err(ctx.err("`spec.value` must be >= 0")),
        Some(Value::String(s)) => {
            return Err(ctx.err(format!("symbolic value `{s}` is not supported; give an integer")))
        }
        Some(_) => return Err(ctx.err("`spec.value` must be an integer")),
        None => return Err(ctx.missing("spec.value")),
    };
    ctx.unit(spec)?;
    Ok(TimingEqualityDoc {
        name,
        variable_name,
        op,
        value,
    })
}

fn equation(ctx: &DocCtx, name: String, spec: &Mapping) -> Result<TimingEquationDoc, ManifestError> {
    let text = ctx.str_field(spec, "spec.equation", "equation")?;
    let chain = parse_chain(&text).map_err(|m| ManifestError::Equation {
        doc: ctx.label.clone(),
        message: m,
    })?;
    ctx.unit(spec)?;
    let mut bindings = BTreeMap::new();
    for (k, v) in spec {
        let Some(k) = k.as_str() else { continue };
        if k == "equation" || k == "unit" {
            continue;
        }
        match v {
            Value::String(s) => {
                bindings.insert(k.to_string(), s.clone());
            }
            _ => return Err(ctx.err(format!("binding `{k}` must name a symbol"))),
        }
    }
    for ph in chain.vars() {
        if !bindings.contains_key(ph) {
            return Err(ManifestError::Equation {
                doc: ctx.label.clone(),
                message: format!("placeholder `{ph}` has no binding"),
            });
        }
    }
    Ok(TimingEquationDoc {
        name,
        equation: text,
        chain,
        bindings,
    })
}

fn function(ctx: &DocCtx, name: String, spec: &Mapping) -> Result<FunctionMetadata, ManifestError> {
    let list = spec
        .get("available patterns")
        .or_else(|| spec.get("available_patterns"))
        .ok_or_else(|| ctx.missing("spec.available patterns"))?;
    let seq = list
        .as_sequence()
        .ok_or_else(|| ctx.err("`available patterns` must be a list"))?;
    let mut available_patterns = Vec::new();
    for item in seq {
        match item.as_str() {
            Some(s) => available_patterns.push(s.to_string()),
            None => return Err(ctx.err("pattern names must be strings")),
        }
    }
    if available_patterns.is_empty() {
        return Err(ctx.err("`available patterns` must not be empty"));
    }
    let runtime = ctx.u64_field(spec, "spec.runtime", "runtime")?;
    if runtime == 0 {
        return Err(ctx.err("`spec.runtime` must be positive"));
    }
    Ok(FunctionMetadata {
        name,
        available_patterns,
        elementsize: ctx.u64_field(spec, "spec.elementsize", "elementsize")?,
        internalsize: ctx.u64_field(spec, "spec.internalsize", "internalsize")?,
        runtime,
    })
}

/// Evaluates the chained comparison under `assignment` (symbol -> value)
/// with exact integer arithmetic.
pub fn evaluate_timing_equation(
    doc: &TimingEquationDoc,
    assignment: &BTreeMap<String, i64>,
) -> Result<bool, ManifestError> {
    eval_with_bindings(&doc.chain, &doc.bindings, assignment).map_err(|symbol| ManifestError::MissingSymbol {
        doc: doc.name.clone(),
        symbol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq_doc() -> TimingEquationDoc {
        let text = "apiVersion: rdsl/v0\nkind: timing equation\nmetadata:\n  name: E\nspec:\n  \
                    equation: C <= A*370 + B < 500\n  C: grid_period\n  A: num_ue1\n  B: gp_base\n  unit: clock\n";
        match parse_constraint_stream(text).unwrap().remove(0) {
            ConstraintDoc::Equation(e) => e,
            other => panic!("{other:?}"),
        }
    }

    fn assign(g: i64, n: i64, b: i64) -> BTreeMap<String, i64> {
        [("grid_period", g), ("num_ue1", n), ("gp_base", b)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    #[test]
    fn equation_truth_table() {
        let d = eq_doc();
        assert!(evaluate_timing_equation(&d, &assign(400, 1, 100)).unwrap());
        assert!(!evaluate_timing_equation(&d, &assign(480, 1, 100)).unwrap());
        assert!(evaluate_timing_equation(&d, &assign(0, 0, 0)).unwrap());
        // second link: 470 < 500 holds, 530 < 500 does not
        assert!(!evaluate_timing_equation(&d, &assign(0, 1, 160)).unwrap());
    }

    #[test]
    fn equation_missing_symbol() {
        let d = eq_doc();
        let mut a = assign(1, 1, 1);
        a.remove("gp_base");
        match evaluate_timing_equation(&d, &a) {
            Err(ManifestError::MissingSymbol { symbol, .. }) => assert_eq!(symbol, "gp_base"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_kind_names_document() {
        let text = "apiVersion: rdsl/v0\nkind: timing wish\nmetadata:\n  name: W\nspec: {}\n";
        let err = parse_constraint_stream(text).unwrap_err();
        assert!(err.to_string().contains("`W`"), "{err}");
        assert!(err.to_string().contains("timing wish"), "{err}");
    }

    #[test]
    fn unknown_api_version() {
        let text = "apiVersion: rdsl/v9\nkind: SDK\nmetadata:\n  name: W\nspec: {}\n";
        assert!(matches!(
            parse_constraint_stream(text),
            Err(ManifestError::UnknownApiVersion { .. })
        ));
    }

    #[test]
    fn missing_field_and_bad_unit() {
        let text = "apiVersion: rdsl/v0\nkind: timing equality\nmetadata:\n  name: P\nspec:\n  \
                    variable_name: x\n  constraint: equal\n  unit: clock\n";
        assert!(matches!(
            parse_constraint_stream(text),
            Err(ManifestError::MissingField { ref field, .. }) if field == "spec.value"
        ));
        let text = text.replace("unit: clock", "value: 3\n  unit: ns");
        assert!(parse_constraint_stream(&text).unwrap_err().to_string().contains("unit"));
    }

    #[test]
    fn unbound_placeholder() {
        let text = "apiVersion: rdsl/v0\nkind: timing equation\nmetadata:\n  name: E\nspec:\n  \
                    equation: C <= D\n  C: a\n  unit: clock\n";
        assert!(matches!(
            parse_constraint_stream(text),
            Err(ManifestError::Equation { .. })
        ));
    }
}
