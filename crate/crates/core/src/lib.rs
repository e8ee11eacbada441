//! Offline planner for per-row tiered sharding of sequence embedding tables.
//!
//! Rows of one or more embedding tables are ordered by their expected number
//! of occurrences per data sample and split into three tiers:
//!
//! * **DP**: replicated on every GPU, gradients synchronized by a global all-reduce.
//! * **Flex**: row-wise sharded within a node and replicated across nodes.
//! * **RW**: row-wise sharded across every GPU, served by a global all-to-all.
//!
//! The crate is organized bottom-up:
//!
//! * [`topology`] describes the cluster and its collective bandwidths.
//! * [`distribution`] holds per-row occurrence probabilities.
//! * [`cost_model`] evaluates per-GPU memory and communication costs.
//! * [`planner`] walks the cost frontier and emits sharding plans.
//! * [`simulator`] samples synthetic batches and measures realized traffic.

pub mod cost_model;
pub mod distribution;
pub mod numeric;
pub mod plan_doc;
pub mod planner;
pub mod simulator;
pub mod topology;

pub use cost_model::{Breakpoints, CostModelConfig, RatioPoint, Strategy, StrategyCost};
pub use distribution::{RowDistribution, RowKey, RowRecord, TableInfo};
pub use plan_doc::PlanDocument;
pub use planner::{
    CollectiveCost, CostReport, Frontier, FrontierPoint, FrontierPoints, PlanGoal, ShardingPlan,
    Tier, TierAssignment, TierCoverage,
};
pub use simulator::{Discrepancy, SimComparison, SimReport, Workload};
pub use topology::Topology;

/// Version string embedded in every emitted document.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
