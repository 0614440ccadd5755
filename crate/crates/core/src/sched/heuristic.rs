//! Greedy list scheduling, used to seed the exact search and as the answer
//! in heuristic mode.

use super::bnb::{Child, State};
use super::model::{Model, Sol};

#[derive(Clone, Copy)]
enum Rule {
    /// Highest tail first, placed where its outputs land earliest.
    CriticalPath,
    /// Whichever dispatch starts earliest, ties by tail.
    EarliestStart,
    /// Any eligible dispatch, picked by the lower bound of the state it
    /// leads to.
    BoundGuided,
}

/// Best of a few greedy passes, or `None` if every pass dead-ends.
pub(crate) fn list_schedule(m: &Model) -> Option<Sol> {
    [Rule::CriticalPath, Rule::EarliestStart, Rule::BoundGuided]
        .into_iter()
        .filter_map(|r| pass(m, r))
        .min_by_key(|s| s.makespan)
}

fn pass(m: &Model, rule: Rule) -> Option<Sol> {
    let mut s = State::root(m);
    let mut buf = Vec::new();
    while !s.done() {
        let mut elig: Vec<usize> = s.eligible(m).collect();
        let mut candidates: Vec<Child> = Vec::new();
        match rule {
            Rule::CriticalPath => {
                elig.sort_by_key(|&t| (std::cmp::Reverse(m.tail[t]), t));
                for t in elig {
                    buf.clear();
                    s.expand_all(m, t, &mut buf);
                    if !buf.is_empty() {
                        buf.sort_by_key(|c| (c.end, c.start, c.core, c.combo.clone()));
                        candidates = std::mem::take(&mut buf);
                        break;
                    }
                }
            }
            Rule::EarliestStart => {
                for t in elig {
                    s.expand_all(m, t, &mut candidates);
                }
                candidates.sort_by_key(|c| {
                    (
                        c.start,
                        std::cmp::Reverse(m.tail[c.task]),
                        c.end,
                        c.core,
                        c.combo.clone(),
                    )
                });
            }
            Rule::BoundGuided => {
                let mut best: Option<(u64, u64, State)> = None;
                for t in elig {
                    buf.clear();
                    s.expand_all(m, t, &mut buf);
                    for c in &buf {
                        let ns = s.apply(m, c);
                        if !ns.capacity_ok(m, c.task) {
                            continue;
                        }
                        let key = (ns.lower_bound(m), c.end);
                        if best.as_ref().is_none_or(|b| key < (b.0, b.1)) {
                            best = Some((key.0, key.1, ns));
                        }
                    }
                }
                s = best?.2;
                continue;
            }
        }
        let next = candidates.iter().find_map(|c| {
            let ns = s.apply(m, c);
            ns.capacity_ok(m, c.task).then_some(ns)
        })?;
        s = next;
    }
    s.leaf_ok(m).then(|| s.to_sol())
}
