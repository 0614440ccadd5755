//! Front end for the flow language: lexing, parsing, validation against a
//! symbol table, and label collection.

pub mod ast;
mod labels;
mod lexer;
mod parser;
mod pretty;
mod validate;

pub use ast::{
    Binding, Direction, Expr, FlowDef, Instantiation, Iterator as IteratorDecl, StreamDecl, StreamRef, SymbolTable,
};
pub use labels::{collect_labels, LabelMap, LabelTarget};
pub use parser::parse_flow_source;
pub use pretty::pretty_print;
pub use validate::{eval_shape, validate_flows, ValidatedFlows};
