use super::catalog::{Pattern, PatternCatalog, ShareKey, ShareLevel, SidePair};
use super::naming::canonical;
use super::topology::{HardwareTopology, MemLevel};

struct Draft {
    pattern: Pattern,
    core: usize,
    /// L2-level anchor of the defining and observing side.
    l2_in: String,
    l2_out: String,
    readable: [String; 2],
}

/// Derives the standard pattern set from a topology.
///
/// Per core `c` (with L2 `l2` and L3 slice `m`) and per DDR `d`:
///
/// * `big_delay.c_<c>.<m>.<d>.<m>` and `big_delay.c_<c>.<m>.<d>.acc<m>`:
///   round trip through DDR, anchored on `m`;
/// * `pipeline.c_<c>.<m>`: defined and observed in the core's own L2;
/// * `L2toL2.c_<c>.<m>.acc<m>`: from the core's L2 into `m`.
///
/// Sharing sets follow from side anchors at L2 level: the defining side is
/// anchored on the core's L2, the observing side on the core's L2 for
/// `pipeline` and on the `acc<m>` port otherwise. There are no L3-level
/// anchors, so the `shares_L3_*` sets are empty. `exclusive_define_with`
/// holds every pattern defined from the same core.
pub fn generate_patterns_from_topology(topo: &HardwareTopology) -> PatternCatalog {
    let ddrs: Vec<&str> = topo.memories_at(MemLevel::Ddr).map(|m| m.id.as_str()).collect();
    let mut drafts = Vec::new();
    for core in &topo.cores {
        let c = core.id;
        let l2 = core.l2.as_str();
        let m = core.l3.as_str();
        let acc = format!("acc{m}");
        let mk = |name: String, def: &str, obs: &str, out_anchor: &str| Draft {
            pattern: Pattern::new(&name, def, obs),
            core: c,
            l2_in: canonical(l2),
            l2_out: canonical(out_anchor),
            readable: [canonical(l2), canonical(m)],
        };
        for d in &ddrs {
            drafts.push(mk(format!("big_delay.c_{c}.{m}.{d}.{m}"), m, m, &acc));
            drafts.push(mk(format!("big_delay.c_{c}.{m}.{d}.{acc}"), m, m, &acc));
        }
        drafts.push(mk(format!("pipeline.c_{c}.{m}"), l2, l2, l2));
        drafts.push(mk(format!("L2toL2.c_{c}.{m}.{acc}"), l2, m, &acc));
    }

    let names: Vec<String> = drafts.iter().map(|d| d.pattern.name.clone()).collect();
    let anchor = |d: &Draft, side_out: bool| if side_out { d.l2_out.clone() } else { d.l2_in.clone() };
    let mut patterns = Vec::with_capacity(drafts.len());
    for p in &drafts {
        let mut pat = p.pattern.clone();
        pat.exclusive_define_with = drafts
            .iter()
            .zip(&names)
            .filter(|(q, _)| q.core == p.core)
            .map(|(_, n)| n.clone())
            .collect();
        for pair in SidePair::ALL {
            let (mine_out, theirs_out) = match pair {
                SidePair::II => (false, false),
                SidePair::IO => (false, true),
                SidePair::OI => (true, false),
                SidePair::OO => (true, true),
            };
            let a = anchor(p, mine_out);
            let set = drafts
                .iter()
                .zip(&names)
                .filter(|(q, _)| anchor(q, theirs_out) == a)
                .map(|(_, n)| n.clone())
                .collect();
            pat.shares.insert(
                ShareKey {
                    level: ShareLevel::L2,
                    pair,
                },
                set,
            );
        }
        pat.can_observe = drafts
            .iter()
            .zip(&names)
            .filter(|(q, _)| p.readable.contains(&canonical(&q.pattern.observing_memory)))
            .map(|(_, n)| n.clone())
            .collect();
        patterns.push(pat);
    }
    PatternCatalog::new(patterns).expect("generated names are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_of_each_class() {
        let t = HardwareTopology::uniform(1, 1 << 20, 1 << 25);
        let cat = generate_patterns_from_topology(&t);
        let names: Vec<_> = cat.patterns().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "big_delay.c_0.L3_0.DDR_0.L3_0",
                "big_delay.c_0.L3_0.DDR_0.accL3_0",
                "pipeline.c_0.L3_0",
                "L2toL2.c_0.L3_0.accL3_0",
            ]
        );
        cat.check_references().unwrap();
        cat.check_memories(&t).unwrap();
    }

    #[test]
    fn no_cores_no_patterns() {
        let mut t = HardwareTopology::uniform(1, 1 << 20, 1 << 25);
        t.cores.clear();
        assert!(generate_patterns_from_topology(&t).is_empty());
    }

    #[test]
    fn sharing_is_symmetric() {
        let t = HardwareTopology::uniform(4, 1 << 20, 1 << 25);
        let cat = generate_patterns_from_topology(&t);
        for (i, p) in cat.patterns().iter().enumerate() {
            for key in ShareKey::all() {
                for m in p.share_set(key) {
                    let j = cat.resolve(m).unwrap();
                    let back = ShareKey {
                        level: key.level,
                        pair: key.pair.reversed(),
                    };
                    let q = cat.get(j);
                    assert!(
                        q.share_set(back).iter().any(|n| cat.resolve(n) == Some(i)),
                        "{} lists {} in {:?} but not vice versa",
                        p.name,
                        q.name,
                        key
                    );
                }
            }
        }
    }
}
