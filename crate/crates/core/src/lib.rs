//! Compiler and solver for declarative digital twins of periodic real-time
//! pipelines.
//!
//! The pipeline is: flow sources and manifests are parsed ([`dsl`],
//! [`manifest`]), expanded into a flat task graph ([`graph`]), scheduled for
//! best-case latency ([`sched`]), and then perturbed with failure-inducing
//! constraints to produce ranked test scenarios ([`scenario`]).

pub mod commands;
pub mod diag;
pub mod dsl;
pub mod graph;
pub mod manifest;
pub mod par;
pub mod project;
pub mod scenario;
pub mod sched;

pub use diag::{Diagnostic, Diagnostics, Severity};
