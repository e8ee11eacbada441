//! JSON form of a sharding plan.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{breakpoints, Breakpoints, CostModelConfig, CostModelError};
use crate::distribution::{RowDistribution, RowKey, TableInfo};
use crate::planner::{CostReport, PlanGoal, ShardingPlan, Tier, TierAssignment, TierCoverage};
use crate::topology::Topology;
use crate::TOOL_VERSION;

#[derive(Debug, Error)]
pub enum PlanDocError {
    #[error("plan json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("plan was made for tables {plan:?} but the manifest has {manifest:?}")]
    TableMismatch { plan: Vec<(u32, u64)>, manifest: Vec<(u32, u64)> },
    #[error("row {row_id} of table {table_id} is listed in more than one tier")]
    Overlap { table_id: u32, row_id: u64 },
    #[error(transparent)]
    CostModel(#[from] CostModelError),
}

/// Replicated and Flex row ids, grouped by table and sorted ascending.
/// Every other row of a listed table is row-wise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierRows {
    pub dp: BTreeMap<u32, Vec<u64>>,
    pub flex: BTreeMap<u32, Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub tool_version: String,
    pub goal: PlanGoal,
    /// Marks plan kinds beyond the memory-neutral algorithms.
    pub extension: bool,
    pub config: CostModelConfig,
    pub topology: Topology,
    pub breakpoints: Breakpoints,
    pub tables: BTreeMap<u32, TableInfo>,
    pub dp_cut: usize,
    pub flex_cut: usize,
    pub total_rows: usize,
    pub coverage: TierCoverage,
    pub predicted: CostReport,
    pub tiers: TierRows,
    pub warnings: Vec<String>,
}

impl PlanDocument {
    pub fn new(
        plan: &ShardingPlan,
        dist: &RowDistribution,
        cfg: &CostModelConfig,
        topo: &Topology,
    ) -> Result<Self, PlanDocError> {
        let mut tiers = TierRows::default();
        for (k, r) in dist.rows()[..plan.flex_cut].iter().enumerate() {
            let bucket = if k < plan.dp_cut { &mut tiers.dp } else { &mut tiers.flex };
            bucket.entry(r.table_id).or_default().push(r.row_id);
        }
        for ids in tiers.dp.values_mut().chain(tiers.flex.values_mut()) {
            ids.sort_unstable();
        }
        Ok(Self {
            tool_version: TOOL_VERSION.to_string(),
            goal: plan.goal,
            extension: plan.extension,
            config: *cfg,
            topology: *topo,
            breakpoints: breakpoints(cfg, topo)?,
            tables: dist.tables().clone(),
            dp_cut: plan.dp_cut,
            flex_cut: plan.flex_cut,
            total_rows: plan.total_rows,
            coverage: plan.predicted.coverage,
            predicted: plan.predicted,
            tiers,
            warnings: plan.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String, PlanDocError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, PlanDocError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PlanDocError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| PlanDocError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Row-to-tier lookup for the simulator.
    pub fn assignment(&self) -> Result<TierAssignment, PlanDocError> {
        let collect = |rows: &BTreeMap<u32, Vec<u64>>| -> HashSet<RowKey> {
            rows.iter()
                .flat_map(|(&table_id, ids)| ids.iter().map(move |&row_id| RowKey { table_id, row_id }))
                .collect()
        };
        let dp = collect(&self.tiers.dp);
        let flex = collect(&self.tiers.flex);
        if let Some(k) = dp.intersection(&flex).min() {
            return Err(PlanDocError::Overlap { table_id: k.table_id, row_id: k.row_id });
        }
        Ok(TierAssignment {
            tables: self.tables.iter().map(|(&t, info)| (t, info.num_rows)).collect(),
            dp,
            flex,
        })
    }

    /// Fails unless `dist` has exactly the tables, with the same sizes, the plan was made for.
    pub fn check_tables(&self, dist: &RowDistribution) -> Result<(), PlanDocError> {
        let sizes = |t: &BTreeMap<u32, TableInfo>| -> Vec<(u32, u64)> {
            t.iter().map(|(&id, info)| (id, info.num_rows)).collect()
        };
        let (plan, manifest) = (sizes(&self.tables), sizes(dist.tables()));
        if plan != manifest {
            return Err(PlanDocError::TableMismatch { plan, manifest });
        }
        Ok(())
    }

    pub fn row_count(&self, tier: Tier) -> u64 {
        self.coverage.get(tier).row_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan_2tier, plan_3tier};

    fn fixture() -> (RowDistribution, CostModelConfig, Topology) {
        let cfg = CostModelConfig::new(64, 256, 4, 6.0);
        let topo = Topology::reference_cluster();
        let a = RowDistribution::synthesize_zipf(0, 3_000, 1.05, 100.0, 1).unwrap();
        let b = RowDistribution::synthesize_zipf(7, 1_000, 1.2, 50.0, 2).unwrap();
        (RowDistribution::merge([&a, &b]).unwrap(), cfg, topo)
    }

    #[test]
    fn json_round_trip() {
        let (d, cfg, topo) = fixture();
        let plan = plan_3tier(&d, &cfg, &topo).unwrap();
        let doc = PlanDocument::new(&plan, &d, &cfg, &topo).unwrap();
        let text = doc.to_json().unwrap();
        let back = PlanDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn assignment_matches_plan() {
        let (d, cfg, topo) = fixture();
        let plan = plan_3tier(&d, &cfg, &topo).unwrap();
        let doc = PlanDocument::new(&plan, &d, &cfg, &topo).unwrap();
        assert_eq!(doc.assignment().unwrap(), TierAssignment::from_plan(&plan, &d));
        assert_eq!(doc.row_count(Tier::Dp), plan.dp_cut as u64);
        assert_eq!(doc.row_count(Tier::Flex), (plan.flex_cut - plan.dp_cut) as u64);
    }

    #[test]
    fn table_mismatch_is_detected() {
        let (d, cfg, topo) = fixture();
        let plan = plan_2tier(&d, &cfg, &topo).unwrap();
        let doc = PlanDocument::new(&plan, &d, &cfg, &topo).unwrap();
        doc.check_tables(&d).unwrap();
        let other = RowDistribution::synthesize_zipf(0, 3_001, 1.05, 100.0, 1).unwrap();
        assert!(matches!(doc.check_tables(&other), Err(PlanDocError::TableMismatch { .. })));
    }

    #[test]
    fn overlapping_tiers_are_rejected() {
        let (d, cfg, topo) = fixture();
        let plan = plan_2tier(&d, &cfg, &topo).unwrap();
        let mut doc = PlanDocument::new(&plan, &d, &cfg, &topo).unwrap();
        doc.tiers.flex.insert(0, doc.tiers.dp[&0][..1].to_vec());
        assert!(matches!(doc.assignment(), Err(PlanDocError::Overlap { .. })));
    }
}
