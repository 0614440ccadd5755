use super::catalog::Pattern;
use super::naming::PatternClass;
use super::topology::{CostTable, HardwareTopology};
use super::ManifestError;

/// `base(class) + ceil(size / bandwidth(class))`.
pub fn transfer_cost(p: &Pattern, size: u64, topo: &HardwareTopology) -> Result<u64, ManifestError> {
    let class = PatternClass::of(&p.name).ok_or_else(|| ManifestError::UnknownPatternClass(p.name.clone()))?;
    Ok(class_cost(class, size, &topo.pattern_costs))
}

pub fn class_cost(class: PatternClass, size: u64, table: &CostTable) -> u64 {
    let c = table.get(class);
    match c.bandwidth {
        Some(bw) => c.base + size.div_ceil(bw),
        None => c.base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::topology::ClassCost;

    fn pat(name: &str) -> Pattern {
        Pattern::new(name, "L3_0", "L3_0")
    }

    #[test]
    fn pipeline_is_free_at_zero() {
        let t = HardwareTopology::uniform(1, 1 << 20, 1 << 25);
        assert_eq!(transfer_cost(&pat("pipeline.c_0.L3_0"), 0, &t).unwrap(), 0);
    }

    #[test]
    fn big_delay_pdsch_buffer() {
        let mut t = HardwareTopology::uniform(1, 1 << 20, 1 << 25);
        t.pattern_costs.big_delay = ClassCost {
            base: 1000,
            bandwidth: Some(16),
        };
        let c = transfer_cost(&pat("big_delay.c_0.L3_0.DDR_0.L3_0"), 2_800_000, &t).unwrap();
        assert_eq!(c, 1000 + 175_000);
    }

    #[test]
    fn class_ordering_under_defaults() {
        let t = CostTable::default();
        for size in [0u64, 1, 63, 64, 65, 10_000, 2_800_000] {
            let p = class_cost(PatternClass::Pipeline, size, &t);
            let l = class_cost(PatternClass::L2toL2, size, &t);
            let b = class_cost(PatternClass::BigDelay, size, &t);
            assert!(b >= l && l >= p, "size {size}");
        }
    }

    #[test]
    fn unknown_class() {
        let t = HardwareTopology::uniform(1, 1 << 20, 1 << 25);
        assert!(matches!(
            transfer_cost(&pat("warp.c_0"), 5, &t),
            Err(ManifestError::UnknownPatternClass(_))
        ));
    }
}
