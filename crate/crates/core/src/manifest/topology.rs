use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::naming::{canonical, PatternClass};
use super::ManifestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemLevel {
    L2,
    L3,
    #[serde(rename = "DDR")]
    Ddr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Memory {
    pub id: String,
    pub level: MemLevel,
    /// Bytes.
    pub capacity: u64,
    /// Bytes per cycle.
    pub bandwidth: u64,
    /// Cycles.
    #[serde(default)]
    pub latency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Core {
    pub id: usize,
    pub l2: String,
    pub l3: String,
    /// Accelerators are cores that only run the listed functions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerator_for: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCost {
    pub base: u64,
    /// Bytes per cycle; `None` means the class has no size term.
    #[serde(default)]
    pub bandwidth: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTable {
    pub pipeline: ClassCost,
    #[serde(rename = "L2toL2")]
    pub l2tol2: ClassCost,
    pub big_delay: ClassCost,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            pipeline: ClassCost {
                base: 0,
                bandwidth: None,
            },
            l2tol2: ClassCost {
                base: 200,
                bandwidth: Some(64),
            },
            big_delay: ClassCost {
                base: 1000,
                bandwidth: Some(16),
            },
        }
    }
}

impl CostTable {
    pub fn get(&self, class: PatternClass) -> ClassCost {
        match class {
            PatternClass::Pipeline => self.pipeline,
            PatternClass::L2toL2 => self.l2tol2,
            PatternClass::BigDelay => self.big_delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareTopology {
    pub clock_hz: u64,
    pub memories: Vec<Memory>,
    pub cores: Vec<Core>,
    #[serde(default)]
    pub pattern_costs: CostTable,
}

impl HardwareTopology {
    pub fn from_yaml(text: &str) -> Result<Self, ManifestError> {
        let t: HardwareTopology = serde_yaml::from_str(text).map_err(|e| ManifestError::Yaml {
            doc: 1,
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let bad = |m: String| ManifestError::Topology(m);
        let mut ids = BTreeSet::new();
        for m in &self.memories {
            if !ids.insert(canonical(&m.id)) {
                return Err(bad(format!("memory `{}` declared twice", m.id)));
            }
            if m.capacity == 0 {
                return Err(bad(format!("memory `{}` has zero capacity", m.id)));
            }
            if m.bandwidth == 0 {
                return Err(bad(format!("memory `{}` has zero bandwidth", m.id)));
            }
        }
        let mut core_ids = BTreeSet::new();
        for c in &self.cores {
            if !core_ids.insert(c.id) {
                return Err(bad(format!("core {} declared twice", c.id)));
            }
            for (lvl, mem) in [(MemLevel::L2, &c.l2), (MemLevel::L3, &c.l3)] {
                match self.memory(mem) {
                    Some(m) if m.level == lvl => {}
                    Some(_) => return Err(bad(format!("core {} attaches `{mem}` at the wrong level", c.id))),
                    None => return Err(bad(format!("core {} attaches unknown memory `{mem}`", c.id))),
                }
            }
        }
        for (i, c) in self.cores.iter().enumerate() {
            if c.id != i {
                return Err(bad(format!("core ids must be 0..{}, in order", self.cores.len())));
            }
        }
        for class in PatternClass::ALL {
            if self.pattern_costs.get(class).bandwidth == Some(0) {
                return Err(bad(format!("zero bandwidth for pattern class {class}")));
            }
        }
        Ok(())
    }

    pub fn memory(&self, id: &str) -> Option<&Memory> {
        let c = canonical(id);
        self.memories.iter().find(|m| canonical(&m.id) == c)
    }

    pub fn memory_index(&self, id: &str) -> Option<usize> {
        let c = canonical(id);
        self.memories.iter().position(|m| canonical(&m.id) == c)
    }

    pub fn max_capacity(&self) -> u64 {
        self.memories.iter().map(|m| m.capacity).max().unwrap_or(0)
    }

    pub fn memories_at(&self, level: MemLevel) -> impl Iterator<Item = &Memory> {
        self.memories.iter().filter(move |m| m.level == level)
    }

    /// Cores whose L2 or L3 is `mem`.
    pub fn cores_attached_to(&self, mem: &str) -> BTreeSet<usize> {
        let c = canonical(mem);
        self.cores
            .iter()
            .filter(|k| canonical(&k.l2) == c || canonical(&k.l3) == c)
            .map(|k| k.id)
            .collect()
    }

    /// `cores` identical cores with private L2s sharing `L3_0` and `DDR_0`.
    pub fn uniform(cores: usize, l2_capacity: u64, l3_capacity: u64) -> Self {
        let mut memories: Vec<Memory> = (0..cores)
            .map(|k| Memory {
                id: format!("L2_{k}"),
                level: MemLevel::L2,
                capacity: l2_capacity,
                bandwidth: 64,
                latency: 14,
            })
            .collect();
        memories.push(Memory {
            id: "L3_0".into(),
            level: MemLevel::L3,
            capacity: l3_capacity,
            bandwidth: 32,
            latency: 50,
        });
        memories.push(Memory {
            id: "DDR_0".into(),
            level: MemLevel::Ddr,
            capacity: 1 << 36,
            bandwidth: 16,
            latency: 200,
        });
        Self {
            clock_hz: 2_000_000_000,
            memories,
            cores: (0..cores)
                .map(|k| Core {
                    id: k,
                    l2: format!("L2_{k}"),
                    l3: "L3_0".into(),
                    accelerator_for: None,
                })
                .collect(),
            pattern_costs: CostTable::default(),
        }
    }
}

/// Values a deployment supplies for one analysis run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    pub entry_flow: String,
    #[serde(default)]
    pub symbols: BTreeMap<String, i64>,
    /// Cycles available per slot.
    pub slot_budget: u64,
    /// Cycles a task may wait after its inputs are ready; absent disables it.
    #[serde(default)]
    pub max_start_lag: Option<u64>,
    /// Files holding `kind: SDK` documents, relative to the deployment file.
    #[serde(default)]
    pub metadata: Vec<String>,
    /// Timing variable that denotes the slot period.
    #[serde(default = "default_period_symbol")]
    pub period_symbol: String,
    /// Values for timing-equation symbols that are not schedule-derived.
    #[serde(default)]
    pub assignments: BTreeMap<String, i64>,
}

fn default_period_symbol() -> String {
    "modem_period".into()
}

impl DeploymentConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ManifestError> {
        let d: DeploymentConfig = serde_yaml::from_str(text).map_err(|e| ManifestError::Yaml {
            doc: 1,
            message: e.to_string(),
        })?;
        if d.slot_budget == 0 {
            return Err(ManifestError::Topology("slot_budget must be positive".into()));
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_valid() {
        HardwareTopology::uniform(4, 1 << 20, 1 << 25).validate().unwrap();
    }

    #[test]
    fn dangling_core_memory() {
        let mut t = HardwareTopology::uniform(2, 1 << 20, 1 << 25);
        t.cores[1].l2 = "L2_9".into();
        assert!(t.validate().unwrap_err().to_string().contains("L2_9"));
    }

    #[test]
    fn yaml_round_trip_with_default_costs() {
        let y = "clock_hz: 2000000000\nmemories:\n  - {id: L2_0, level: L2, capacity: 100, bandwidth: 64}\n  \
                 - {id: L3_0, level: L3, capacity: 1000, bandwidth: 32}\ncores:\n  - {id: 0, l2: L2_0, l3: L3_0}\n";
        let t = HardwareTopology::from_yaml(y).unwrap();
        assert_eq!(t.pattern_costs, CostTable::default());
        assert_eq!(t.cores_attached_to("L3.0"), [0].into_iter().collect());
    }
}
