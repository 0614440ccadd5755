use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    Internal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Internal => "internal",
        }
    }
}

/// A dimension or bound: either a literal or a symbol looked up in the
/// deployment's symbol table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Sym(String),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Sym(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDecl {
    pub name: String,
    pub shape: Vec<Expr>,
    pub direction: Direction,
    /// Whether `type = ...` was written explicitly.
    pub explicit_type: bool,
    pub labels: Vec<String>,
    /// Attributes other than `type` and `label`, kept verbatim.
    pub attributes: BTreeMap<String, String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterator {
    pub var: String,
    pub lower: Expr,
    pub upper: Expr,
}

/// Reference to a stream, optionally indexed (`s[i][2]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRef {
    pub stream: String,
    pub indices: Vec<Expr>,
}

impl fmt::Display for StreamRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.stream)?;
        for i in &self.indices {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub formal: String,
    pub actual: StreamRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instantiation {
    pub callee: String,
    pub iterators: Vec<Iterator>,
    pub bindings: Vec<Binding>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowDef {
    pub name: String,
    pub params: Vec<StreamDecl>,
    pub internals: Vec<StreamDecl>,
    pub instantiations: Vec<Instantiation>,
    pub line: usize,
}

impl FlowDef {
    pub fn stream(&self, name: &str) -> Option<&StreamDecl> {
        self.params.iter().chain(self.internals.iter()).find(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&StreamDecl> {
        self.params.iter().find(|s| s.name == name)
    }
}

/// Integer values for the symbolic constants used in shapes and bounds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolTable {
    pub entries: BTreeMap<String, i64>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: i64) -> Self {
        self.entries.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.entries.get(name).copied()
    }

    /// Entries must be strictly positive.
    pub fn check(&self) -> Result<(), String> {
        for (k, v) in &self.entries {
            if *v <= 0 {
                return Err(format!("symbol `{k}` must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, e: &Expr) -> Option<i64> {
        match e {
            Expr::Int(v) => Some(*v),
            Expr::Sym(s) => self.get(s),
        }
    }
}
