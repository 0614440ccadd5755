//! Pattern and memory names appear both dot-separated (`big_delay.c.0.L3.0`)
//! and underscore-separated (`big_delay.c_0.L3_0`). Both map to one canonical
//! form: split on `.` and `_`, lowercase, and glue digit-only tokens onto the
//! preceding token.

use std::fmt;

use serde::{Deserialize, Serialize};

pub fn canonical(name: &str) -> String {
    let mut toks: Vec<String> = Vec::new();
    for raw in name.split(['.', '_']) {
        if raw.is_empty() {
            continue;
        }
        let t = raw.to_ascii_lowercase();
        if t.bytes().all(|b| b.is_ascii_digit()) {
            if let Some(prev) = toks.last_mut() {
                if !prev.contains('#') {
                    prev.push('#');
                    prev.push_str(&t);
                    continue;
                }
            }
        }
        toks.push(t);
    }
    toks.join(".")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternClass {
    #[serde(rename = "pipeline")]
    Pipeline,
    #[serde(rename = "L2toL2")]
    L2toL2,
    #[serde(rename = "big_delay")]
    BigDelay,
}

impl PatternClass {
    pub const ALL: [PatternClass; 3] = [PatternClass::Pipeline, PatternClass::L2toL2, PatternClass::BigDelay];

    pub fn of(name: &str) -> Option<PatternClass> {
        let c = canonical(name);
        if c == "pipeline" || c.starts_with("pipeline.") {
            Some(PatternClass::Pipeline)
        } else if c == "l2tol2" || c.starts_with("l2tol2.") {
            Some(PatternClass::L2toL2)
        } else if c == "big.delay" || c.starts_with("big.delay.") {
            Some(PatternClass::BigDelay)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PatternClass::Pipeline => "pipeline",
            PatternClass::L2toL2 => "L2toL2",
            PatternClass::BigDelay => "big_delay",
        }
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The `c_<k>` tag of a pattern name, naming the core that defines the buffer.
pub fn core_tag(name: &str) -> Option<usize> {
    canonical(name)
        .split('.')
        .find_map(|t| t.strip_prefix("c#").and_then(|k| k.parse().ok()))
}
