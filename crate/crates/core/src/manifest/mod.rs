//! Typed models for constraint manifests, function metadata, the hardware
//! pattern catalog, and topology/deployment configuration.

mod catalog;
mod constraints;
mod cost;
mod equation;
mod generate;
pub mod naming;
mod topology;

use thiserror::Error;

pub use catalog::{parse_pattern_catalog, parse_patterns, Pattern, PatternCatalog, ShareKey, ShareLevel, SidePair};
pub use constraints::{
    evaluate_timing_equation, parse_constraint_stream, ConstraintDoc, EqualityOp, FunctionMetadata, TimingEqualityDoc,
    TimingEquationDoc, API_VERSION,
};
pub(crate) use constraints::{yaml_documents, DocCtx};
pub use cost::{class_cost, transfer_cost};
pub use equation::{parse_chain, Chain, LinExpr, Relop};
pub use generate::generate_patterns_from_topology;
pub use naming::{canonical, core_tag, PatternClass};
pub use topology::{ClassCost, Core, CostTable, DeploymentConfig, HardwareTopology, MemLevel, Memory};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("YAML document {doc}: {message}")]
    Yaml { doc: usize, message: String },
    #[error("{doc}: {message}")]
    Schema { doc: String, message: String },
    #[error("{doc}: missing required field `{field}`")]
    MissingField { doc: String, field: String },
    #[error("{doc}: unknown apiVersion `{api_version}`")]
    UnknownApiVersion { doc: String, api_version: String },
    #[error("{doc}: unknown kind `{kind}`")]
    UnknownKind { doc: String, kind: String },
    #[error("{doc}: unparseable equation: {message}")]
    Equation { doc: String, message: String },
    #[error("equation `{doc}`: no value for symbol `{symbol}`")]
    MissingSymbol { doc: String, symbol: String },
    #[error("XML: {0}")]
    Xml(String),
    #[error("duplicate pattern name `{0}`")]
    DuplicatePattern(String),
    #[error("pattern `{pattern}` references unknown pattern `{member}`")]
    DanglingMember { pattern: String, member: String },
    #[error("pattern `{pattern}` has no <{anchor}>")]
    MissingAnchor { pattern: String, anchor: &'static str },
    #[error("pattern `{pattern}` is anchored on unknown memory `{memory}`")]
    MissingMemory { pattern: String, memory: String },
    #[error("pattern `{0}` does not belong to a known class (pipeline, L2toL2, big_delay)")]
    UnknownPatternClass(String),
    #[error("topology: {0}")]
    Topology(String),
}
