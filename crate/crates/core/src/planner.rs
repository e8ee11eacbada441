//! Frontier traversal and tiered sharding plans.
//!
//! Rows are visited in descending probability order. Moving the k-th row off
//! row-wise sharding changes per-GPU memory and communication by its marginal
//! cost; the running sums form the memory/communication frontier. Landmarks
//! on that frontier:
//!
//! * **A**: minimum memory (every memory-saving row replicated).
//! * **B**: last point whose cumulative memory is still `<= 0` (memory-neutral).
//! * **C**: last row at or above the DP communication breakpoint.
//! * **D**: the whole table replicated.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{
    breakpoints, marginal_cost, table_cost, Breakpoints, CostModelConfig, CostModelError, Strategy,
};
use crate::distribution::{RowDistribution, RowKey};
use crate::numeric::CompensatedSum;
use crate::topology::Topology;

/// Serialized frontiers are downsampled to at most this many points.
pub const MAX_REPORTED_FRONTIER_POINTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("distribution rows are not sorted by descending probability")]
    Unsorted,
    #[error("frontier strategy must be DP or Flex, got {0:?}")]
    FrontierStrategy(Strategy),
    #[error("infeasible budget: {budget} bytes requested but at most {best} bytes of savings exist")]
    InfeasibleBudget { budget: f64, best: f64 },
    #[error("frontier does not match the distribution ({frontier} points for {rows} rows)")]
    FrontierMismatch { frontier: usize, rows: usize },
    #[error("row {row_id} of table {table_id} is not covered by the plan")]
    RowNotInPlan { table_id: u32, row_id: u64 },
    #[error("invalid plan cuts: dp_cut {dp_cut}, flex_cut {flex_cut}, {rows} rows")]
    InvalidCuts { dp_cut: usize, flex_cut: usize, rows: usize },
    #[error(transparent)]
    CostModel(#[from] CostModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Dp,
    Flex,
    Rw,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Dp => "dp",
            Tier::Flex => "flex",
            Tier::Rw => "rw",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Tier::Dp),
            "flex" => Ok(Tier::Flex),
            "rw" => Ok(Tier::Rw),
            other => Err(format!("unknown tier `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    /// Rows `0..row_index` of the sorted distribution have been moved.
    pub row_index: usize,
    pub cum_marginal_memory_bytes: f64,
    pub cum_marginal_comm_seconds: f64,
}

/// Cumulative marginal costs at every cut, `points[k]` after moving `k` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    pub strategy: Strategy,
    pub points: Vec<FrontierPoint>,
}

impl Frontier {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> FrontierPoint {
        *self.points.last().expect("frontier always holds the origin")
    }

    /// At most `max_points` points, always keeping the origin, the end and `keep`.
    pub fn downsample(&self, max_points: usize, keep: &[usize]) -> Vec<FrontierPoint> {
        let n = self.points.len();
        if n <= max_points {
            return self.points.clone();
        }
        let mut idx: BTreeSet<usize> = keep.iter().copied().filter(|&i| i < n).collect();
        idx.insert(0);
        idx.insert(n - 1);
        let budget = max_points.saturating_sub(idx.len()).max(1);
        let stride = n.div_ceil(budget);
        idx.extend((0..n).step_by(stride));
        while idx.len() > max_points {
            // Drop strided points (never the kept ones) from the end.
            let victim = idx
                .iter()
                .rev()
                .copied()
                .find(|i| *i != 0 && *i != n - 1 && !keep.contains(i))
                .expect("strided points exist");
            idx.remove(&victim);
        }
        idx.into_iter().map(|i| self.points[i]).collect()
    }

    /// CSV with one line per point: `row_index,probability,cum_marginal_memory_bytes,cum_marginal_comm_seconds`.
    /// `probability` is that of the last moved row (empty for the origin).
    pub fn write_csv<W: Write>(
        points: &[FrontierPoint],
        dist: &RowDistribution,
        writer: W,
    ) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "row_index,probability,cum_marginal_memory_bytes,cum_marginal_comm_seconds")?;
        for p in points {
            let prob = match p.row_index {
                0 => String::new(),
                k => format!("{:e}", dist.rows()[k - 1].probability),
            };
            writeln!(
                w,
                "{},{},{:e},{:e}",
                p.row_index, prob, p.cum_marginal_memory_bytes, p.cum_marginal_comm_seconds
            )?;
        }
        w.flush()
    }
}

/// Cumulative marginal cost of moving rows to `strategy` in descending probability order.
pub fn build_frontier(
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
    strategy: Strategy,
) -> Result<Frontier, PlannerError> {
    if !matches!(strategy, Strategy::Dp | Strategy::Flex) {
        return Err(PlannerError::FrontierStrategy(strategy));
    }
    if !dist.is_sorted() {
        return Err(PlannerError::Unsorted);
    }
    cfg.validate()?;
    let mut points = Vec::with_capacity(dist.len() + 1);
    points.push(FrontierPoint { row_index: 0, cum_marginal_memory_bytes: 0.0, cum_marginal_comm_seconds: 0.0 });
    let mut mem = CompensatedSum::new();
    let mut comm = CompensatedSum::new();
    for (k, row) in dist.rows().iter().enumerate() {
        let (dm, dc) = marginal_cost(strategy, row.probability, cfg, topo);
        mem.add(dm);
        comm.add(dc);
        points.push(FrontierPoint {
            row_index: k + 1,
            cum_marginal_memory_bytes: mem.value(),
            cum_marginal_comm_seconds: comm.value(),
        });
    }
    Ok(Frontier { strategy, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoints {
    pub a: FrontierPoint,
    pub b: FrontierPoint,
    pub c: FrontierPoint,
    pub d: FrontierPoint,
}

/// Locates landmarks A-D on a DP frontier.
pub fn find_points(
    frontier: &Frontier,
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Result<FrontierPoints, PlannerError> {
    if frontier.strategy != Strategy::Dp {
        return Err(PlannerError::FrontierStrategy(frontier.strategy));
    }
    if frontier.len() != dist.len() + 1 {
        return Err(PlannerError::FrontierMismatch { frontier: frontier.len(), rows: dist.len() });
    }
    let bp = breakpoints(cfg, topo)?;
    let pts = &frontier.points;

    let mut a = 0;
    for (i, p) in pts.iter().enumerate() {
        if p.cum_marginal_memory_bytes < pts[a].cum_marginal_memory_bytes {
            a = i;
        }
    }
    let b = pts.iter().rposition(|p| p.cum_marginal_memory_bytes <= 0.0).unwrap_or(0);
    let c = dist.rows().partition_point(|r| r.probability >= bp.p_comm_dp);
    Ok(FrontierPoints { a: pts[a], b: pts[b], c: pts[c], d: frontier.last() })
}

/// Row count, expected length and access share of one tier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    pub row_count: u64,
    pub expected_length: f64,
    pub coverage_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TierCoverage {
    pub dp: TierStats,
    pub flex: TierStats,
    pub rw: TierStats,
}

impl TierCoverage {
    pub fn get(&self, tier: Tier) -> &TierStats {
        match tier {
            Tier::Dp => &self.dp,
            Tier::Flex => &self.flex,
            Tier::Rw => &self.rw,
        }
    }

    pub fn total_fraction(&self) -> f64 {
        self.dp.coverage_fraction + self.flex.coverage_fraction + self.rw.coverage_fraction
    }
}

/// Per-GPU payload and latency of one collective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectiveCost {
    /// Bytes per GPU for one pass (each direction for all-to-all).
    pub bytes_per_gpu: f64,
    /// Latency summed over all passes of an iteration.
    pub seconds: f64,
    /// May overlap with other work; reported as a label only.
    pub overlappable: bool,
}

/// Predicted per-GPU costs of a plan next to the pure row-wise baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub coverage: TierCoverage,
    pub static_memory_bytes: f64,
    pub dynamic_memory_bytes: f64,
    pub total_memory_bytes: f64,
    pub baseline_static_memory_bytes: f64,
    pub baseline_dynamic_memory_bytes: f64,
    pub baseline_total_memory_bytes: f64,
    /// Sum of per-row marginal memory over moved rows.
    pub additional_memory_bytes: f64,
    /// Sum of per-row marginal communication over moved rows.
    pub additional_comm_seconds: f64,
    pub rows_accessed_scalars: f64,
    pub input_id_count: f64,
    pub global_a2a: CollectiveCost,
    pub intra_a2a: CollectiveCost,
    pub global_all_reduce: CollectiveCost,
    pub cross_all_reduce: CollectiveCost,
    pub baseline_global_a2a: CollectiveCost,
    /// Share of baseline global all-to-all bytes the plan removes.
    pub global_a2a_reduction: f64,
}

impl CostReport {
    pub fn total_comm_seconds(&self) -> f64 {
        self.global_a2a.seconds
            + self.intra_a2a.seconds
            + self.global_all_reduce.seconds
            + self.cross_all_reduce.seconds
    }

    /// Latency with overlappable collectives left out.
    pub fn blocking_comm_seconds(&self) -> f64 {
        [self.global_a2a, self.intra_a2a, self.global_all_reduce, self.cross_all_reduce]
            .iter()
            .filter(|c| !c.overlappable)
            .map(|c| c.seconds)
            .sum()
    }
}

/// What a plan was optimized for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanGoal {
    TwoTier,
    ThreeTier,
    Budget { memory_budget_bytes: f64, allow_flex: bool },
}

impl std::fmt::Display for PlanGoal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanGoal::TwoTier => write!(f, "2tier"),
            PlanGoal::ThreeTier => write!(f, "3tier"),
            PlanGoal::Budget { memory_budget_bytes, allow_flex } => {
                write!(f, "budget:{memory_budget_bytes}")?;
                if *allow_flex {
                    write!(f, "+flex")?;
                }
                Ok(())
            }
        }
    }
}

/// Tier assignment over the sorted distribution plus its predicted costs.
///
/// Rows `[0, dp_cut)` are replicated, `[dp_cut, flex_cut)` are Flex-sharded
/// and everything else, including rows never observed, is row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardingPlan {
    pub goal: PlanGoal,
    pub dp_cut: usize,
    pub flex_cut: usize,
    pub total_rows: usize,
    pub predicted: CostReport,
    pub warnings: Vec<String>,
    /// Set for plan kinds that go beyond the memory-neutral 2- and 3-tier algorithms.
    pub extension: bool,
}

impl ShardingPlan {
    pub fn coverage(&self) -> &TierCoverage {
        &self.predicted.coverage
    }

    /// Achieved (memory bytes, comm seconds) relative to pure row-wise.
    pub fn achieved(&self) -> (f64, f64) {
        (self.predicted.additional_memory_bytes, self.predicted.additional_comm_seconds)
    }

    pub fn tier_of_index(&self, index: usize) -> Tier {
        if index < self.dp_cut {
            Tier::Dp
        } else if index < self.flex_cut {
            Tier::Flex
        } else {
            Tier::Rw
        }
    }

    pub fn is_pure_rw(&self) -> bool {
        self.flex_cut == 0
    }
}

/// Predicted per-GPU costs of cutting the sorted distribution at `dp_cut` and `flex_cut`.
pub fn predict(
    dist: &RowDistribution,
    dp_cut: usize,
    flex_cut: usize,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Result<CostReport, PlannerError> {
    let n = dist.len();
    if dp_cut > flex_cut || flex_cut > n {
        return Err(PlannerError::InvalidCuts { dp_cut, flex_cut, rows: n });
    }
    let rows_total = dist.total_table_rows();
    let e_dp = dp_cut as u64;
    let e_flex = (flex_cut - dp_cut) as u64;
    let e_rw = rows_total - e_dp - e_flex;
    let l_dp = dist.expected_length(0..dp_cut);
    let l_flex = dist.expected_length(dp_cut..flex_cut);
    let l_rw = dist.expected_length(flex_cut..n);
    let l_total = dist.total_expected_length();

    let fraction = |l: f64, fallback: f64| if l_total > 0.0 { l / l_total } else { fallback };
    let coverage = TierCoverage {
        dp: TierStats { row_count: e_dp, expected_length: l_dp, coverage_fraction: fraction(l_dp, 0.0) },
        flex: TierStats {
            row_count: e_flex,
            expected_length: l_flex,
            coverage_fraction: fraction(l_flex, 0.0),
        },
        rw: TierStats { row_count: e_rw, expected_length: l_rw, coverage_fraction: fraction(l_rw, 1.0) },
    };

    let dp = table_cost(Strategy::Dp, e_dp as f64, l_dp, cfg, topo);
    let flex = table_cost(Strategy::Flex, e_flex as f64, l_flex, cfg, topo);
    let rw = table_cost(Strategy::Rw, e_rw as f64, l_rw, cfg, topo);
    let total = dp + flex + rw;
    let baseline = table_cost(Strategy::Rw, rows_total as f64, l_total, cfg, topo);

    let mut add_mem = CompensatedSum::new();
    let mut add_comm = CompensatedSum::new();
    for (k, row) in dist.rows()[..flex_cut].iter().enumerate() {
        let strategy = if k < dp_cut { Strategy::Dp } else { Strategy::Flex };
        let (dm, dc) = marginal_cost(strategy, row.probability, cfg, topo);
        add_mem.add(dm);
        add_comm.add(dc);
    }

    let rw_bytes = cfg.lookup_payload_bytes(l_rw);
    let baseline_bytes = cfg.lookup_payload_bytes(l_total);
    let row_bytes = cfg.row_bytes();
    Ok(CostReport {
        coverage,
        static_memory_bytes: total.static_memory_bytes,
        dynamic_memory_bytes: total.dynamic_memory_bytes,
        total_memory_bytes: total.total_memory_bytes(),
        baseline_static_memory_bytes: baseline.static_memory_bytes,
        baseline_dynamic_memory_bytes: baseline.dynamic_memory_bytes,
        baseline_total_memory_bytes: baseline.total_memory_bytes(),
        additional_memory_bytes: add_mem.value(),
        additional_comm_seconds: add_comm.value(),
        rows_accessed_scalars: total.rows_accessed_scalars,
        input_id_count: total.input_id_count,
        global_a2a: CollectiveCost {
            bytes_per_gpu: rw_bytes,
            seconds: rw.dynamic_comm_seconds,
            overlappable: false,
        },
        intra_a2a: CollectiveCost {
            bytes_per_gpu: cfg.lookup_payload_bytes(l_flex),
            seconds: flex.dynamic_comm_seconds,
            overlappable: true,
        },
        global_all_reduce: CollectiveCost {
            bytes_per_gpu: e_dp as f64 * row_bytes,
            seconds: dp.static_comm_seconds,
            overlappable: false,
        },
        cross_all_reduce: CollectiveCost {
            bytes_per_gpu: e_flex as f64 / topo.gpus_per_node() as f64 * row_bytes,
            seconds: flex.static_comm_seconds,
            overlappable: true,
        },
        baseline_global_a2a: CollectiveCost {
            bytes_per_gpu: baseline_bytes,
            seconds: baseline.dynamic_comm_seconds,
            overlappable: false,
        },
        global_a2a_reduction: if baseline_bytes > 0.0 { 1.0 - rw_bytes / baseline_bytes } else { 0.0 },
    })
}

fn finish(
    goal: PlanGoal,
    dist: &RowDistribution,
    dp_cut: usize,
    flex_cut: usize,
    cfg: &CostModelConfig,
    topo: &Topology,
    mut warnings: Vec<String>,
) -> Result<ShardingPlan, PlannerError> {
    if flex_cut == 0 {
        warnings.push("no rows moved off row-wise sharding; plan equals pure RW".to_string());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ShardingPlan {
        goal,
        dp_cut,
        flex_cut,
        total_rows: dist.len(),
        predicted: predict(dist, dp_cut, flex_cut, cfg, topo)?,
        warnings,
        extension: matches!(goal, PlanGoal::Budget { allow_flex: true, .. }),
    })
}

/// Memory-neutral DP/RW plan: rows up to point B are replicated.
pub fn plan_2tier(
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Result<ShardingPlan, PlannerError> {
    let frontier = build_frontier(dist, cfg, topo, Strategy::Dp)?;
    let points = find_points(&frontier, dist, cfg, topo)?;
    let cut = points.b.row_index;
    finish(PlanGoal::TwoTier, dist, cut, cut, cfg, topo, Vec::new())
}

/// Memory-neutral DP/Flex/RW plan.
///
/// Every memory-saving row (up to point A) is replicated; the following rows
/// are Flex-sharded while the savings last and their probability stays at or
/// above the Flex communication breakpoint.
pub fn plan_3tier(
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Result<ShardingPlan, PlannerError> {
    let bp = breakpoints(cfg, topo)?;
    let Some(p_comm_flex) = bp.p_comm_flex else {
        let mut plan = plan_2tier(dist, cfg, topo)?;
        let msg = "homogeneous topology (a2a_intra == a2a_global): Flex tier disabled, degraded to 2-tier";
        log::warn!("{msg}");
        plan.warnings.insert(0, msg.to_string());
        return Ok(plan);
    };
    let frontier = build_frontier(dist, cfg, topo, Strategy::Dp)?;
    let points = find_points(&frontier, dist, cfg, topo)?;
    let dp_cut = points.a.row_index;

    let mut warnings = Vec::new();
    let price = bp.flex_memory_price;
    if price <= 0.0 {
        warnings.push(format!(
            "Flex memory price is {price} bytes per row; Flex tier bounded only by the communication breakpoint"
        ));
    }
    let mut mem = CompensatedSum::new();
    mem.add(points.a.cum_marginal_memory_bytes);
    let mut flex_cut = dp_cut;
    for row in &dist.rows()[dp_cut..] {
        if row.probability < p_comm_flex {
            break;
        }
        let (dm, _) = marginal_cost(Strategy::Flex, row.probability, cfg, topo);
        let mut next = mem;
        next.add(dm);
        if price > 0.0 && next.value() > 0.0 {
            break;
        }
        mem = next;
        flex_cut += 1;
    }
    finish(PlanGoal::ThreeTier, dist, dp_cut, flex_cut, cfg, topo, warnings)
}

/// Greedy traversal under a per-GPU marginal memory budget.
///
/// Each row in descending probability order goes to the admissible strategy
/// with the lowest marginal communication (DP on ties). A strategy is
/// admissible when it does not increase communication and keeps the running
/// memory within budget. While the budget is still exceeded, memory-saving
/// rows are taken regardless of their communication cost. Once a row goes to
/// Flex, later rows may only go to Flex so the tiers stay contiguous.
pub fn plan_for_budget(
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
    memory_budget_bytes: f64,
    allow_flex: bool,
) -> Result<ShardingPlan, PlannerError> {
    if !dist.is_sorted() {
        return Err(PlannerError::Unsorted);
    }
    let bp: Breakpoints = breakpoints(cfg, topo)?;
    let flex_enabled = allow_flex && bp.p_comm_flex.is_some();
    let mut warnings = Vec::new();
    if allow_flex && !flex_enabled {
        warnings.push("homogeneous topology: Flex tier disabled for budgeted plan".to_string());
    }

    let mut mem = CompensatedSum::new();
    let mut dp_cut = 0;
    let mut flex_cut = 0;
    let mut in_flex = false;
    for (k, row) in dist.rows().iter().enumerate() {
        let mut options: Vec<(Strategy, f64, f64, CompensatedSum)> = Vec::with_capacity(2);
        for strategy in [Strategy::Dp, Strategy::Flex] {
            let allowed = match strategy {
                Strategy::Dp => !in_flex,
                _ => flex_enabled,
            };
            if allowed {
                let (dm, dc) = marginal_cost(strategy, row.probability, cfg, topo);
                let mut next = mem;
                next.add(dm);
                options.push((strategy, dm, dc, next));
            }
        }
        let admissible = options
            .iter()
            .filter(|o| o.2 <= 0.0 && o.3.value() <= memory_budget_bytes)
            // min_by keeps the first of equal elements, and DP is listed first.
            .min_by(|x, y| x.2.total_cmp(&y.2));
        let chosen = match admissible {
            Some(o) => Some(o),
            None if mem.value() > memory_budget_bytes => options
                .iter()
                .filter(|o| o.1 < 0.0)
                .min_by(|x, y| x.1.total_cmp(&y.1)),
            None => None,
        };
        let Some(&(strategy, _, _, next)) = chosen else {
            break;
        };
        mem = next;
        match strategy {
            Strategy::Dp => {
                dp_cut = k + 1;
                flex_cut = k + 1;
            }
            _ => {
                in_flex = true;
                flex_cut = k + 1;
            }
        }
    }
    if mem.value() > memory_budget_bytes {
        return Err(PlannerError::InfeasibleBudget {
            budget: memory_budget_bytes,
            best: mem.value(),
        });
    }
    finish(
        PlanGoal::Budget { memory_budget_bytes, allow_flex },
        dist,
        dp_cut,
        flex_cut,
        cfg,
        topo,
        warnings,
    )
}

/// Runs the plan algorithm selected by `goal`.
pub fn plan(
    goal: PlanGoal,
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Result<ShardingPlan, PlannerError> {
    match goal {
        PlanGoal::TwoTier => plan_2tier(dist, cfg, topo),
        PlanGoal::ThreeTier => plan_3tier(dist, cfg, topo),
        PlanGoal::Budget { memory_budget_bytes, allow_flex } => {
            plan_for_budget(dist, cfg, topo, memory_budget_bytes, allow_flex)
        }
    }
}

/// Per-tier row counts and access shares of a plan.
pub fn coverage_report(plan: &ShardingPlan, dist: &RowDistribution) -> TierCoverage {
    let n = dist.len();
    let (dp_cut, flex_cut) = (plan.dp_cut.min(n), plan.flex_cut.min(n));
    let l_total = dist.total_expected_length();
    let l_dp = dist.expected_length(0..dp_cut);
    let l_flex = dist.expected_length(dp_cut..flex_cut);
    let l_rw = dist.expected_length(flex_cut..n);
    let fraction = |l: f64, fallback: f64| if l_total > 0.0 { l / l_total } else { fallback };
    TierCoverage {
        dp: TierStats { row_count: dp_cut as u64, expected_length: l_dp, coverage_fraction: fraction(l_dp, 0.0) },
        flex: TierStats {
            row_count: (flex_cut - dp_cut) as u64,
            expected_length: l_flex,
            coverage_fraction: fraction(l_flex, 0.0),
        },
        rw: TierStats {
            row_count: dist.total_table_rows() - flex_cut as u64,
            expected_length: l_rw,
            coverage_fraction: fraction(l_rw, 1.0),
        },
    }
}

/// Row-to-tier mapping keyed by row identity, independent of sort order.
///
/// Rows not listed as DP or Flex are row-wise, provided their table is known
/// and the row id is within the table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TierAssignment {
    pub tables: BTreeMap<u32, u64>,
    pub dp: HashSet<RowKey>,
    pub flex: HashSet<RowKey>,
}

impl TierAssignment {
    pub fn from_plan(plan: &ShardingPlan, dist: &RowDistribution) -> Self {
        let rows = dist.rows();
        Self {
            tables: dist.tables().iter().map(|(&t, info)| (t, info.num_rows)).collect(),
            dp: rows[..plan.dp_cut].iter().map(|r| r.key()).collect(),
            flex: rows[plan.dp_cut..plan.flex_cut].iter().map(|r| r.key()).collect(),
        }
    }

    /// Every row of `dist`'s tables row-wise.
    pub fn pure_rw(dist: &RowDistribution) -> Self {
        Self {
            tables: dist.tables().iter().map(|(&t, info)| (t, info.num_rows)).collect(),
            ..Self::default()
        }
    }

    pub fn tier_of(&self, key: RowKey) -> Result<Tier, PlannerError> {
        match self.tables.get(&key.table_id) {
            Some(&e) if key.row_id < e => {}
            _ => return Err(PlannerError::RowNotInPlan { table_id: key.table_id, row_id: key.row_id }),
        }
        Ok(if self.dp.contains(&key) {
            Tier::Dp
        } else if self.flex.contains(&key) {
            Tier::Flex
        } else {
            Tier::Rw
        })
    }

    pub fn count(&self, tier: Tier) -> u64 {
        match tier {
            Tier::Dp => self.dp.len() as u64,
            Tier::Flex => self.flex.len() as u64,
            Tier::Rw => {
                self.tables.values().sum::<u64>() - self.dp.len() as u64 - self.flex.len() as u64
            }
        }
    }

    /// `table_id,row_id,tier` for every row of `dist`, in sorted order.
    pub fn write_csv<W: Write>(&self, dist: &RowDistribution, writer: W) -> Result<(), PlannerError> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "table_id,row_id,tier")?;
        for r in dist.rows() {
            let tier = self.tier_of(r.key())?;
            writeln!(w, "{},{},{}", r.table_id, r.row_id, tier.name())?;
        }
        Ok(w.flush()?)
    }
}
