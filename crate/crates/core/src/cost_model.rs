//! Per-GPU memory and communication costs of the four sharding strategies.
//!
//! [`table_cost`] is the only place where the table-level formulas live.
//! Per-row marginals are obtained by evaluating it at `E = 1, L = p` and
//! differencing against row-wise sharding, and the breakpoints are the roots
//! of those marginals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{bisect, relative_diff};
use crate::topology::Topology;

/// Agreement required between bisection and closed-form breakpoints.
pub const BREAKPOINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CostModelError {
    #[error("invalid cost model config: {0}")]
    InvalidConfig(String),
    #[error("unknown sharding strategy `{0}`")]
    UnknownStrategy(String),
    #[error("{name} breakpoint mismatch: bisection {bisection:e} vs closed form {closed_form:e}")]
    BreakpointMismatch { name: &'static str, bisection: f64, closed_form: f64 },
    #[error("{0} breakpoint root was not bracketed")]
    NotBracketed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Row-wise across all GPUs.
    Rw,
    /// Column-wise across all GPUs.
    Cw,
    /// Replicated on every GPU.
    Dp,
    /// Row-wise within a node, replicated across nodes.
    Flex,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Rw, Strategy::Cw, Strategy::Dp, Strategy::Flex];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rw => "RW",
            Strategy::Cw => "CW",
            Strategy::Dp => "DP",
            Strategy::Flex => "Flex",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = CostModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rw" => Ok(Strategy::Rw),
            "cw" => Ok(Strategy::Cw),
            "dp" => Ok(Strategy::Dp),
            "flex" => Ok(Strategy::Flex),
            _ => Err(CostModelError::UnknownStrategy(s.to_string())),
        }
    }
}

fn default_dynamic_passes() -> u32 {
    2
}
fn default_static_passes() -> u32 {
    1
}
fn default_bytes_per_id() -> u32 {
    8
}
fn default_true() -> bool {
    true
}

/// Training configuration the costs are evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelConfig {
    /// Samples per GPU per iteration.
    pub local_batch: u32,
    /// Scalars per embedding row.
    pub embedding_dim: u32,
    /// Bytes per scalar (4 for FP32).
    pub scalar_bytes: u32,
    /// Memory multiplier for replicated parameters (optimizer state and framework overhead).
    pub dp_replication: f64,
    /// How often all-to-all traffic is paid per iteration (forward + backward).
    #[serde(default = "default_dynamic_passes")]
    pub dynamic_pass_count: u32,
    /// How often gradient all-reduce traffic is paid per iteration.
    #[serde(default = "default_static_passes")]
    pub static_pass_count: u32,
    /// Adds the lookup-ID exchange to the all-to-all latency.
    #[serde(default)]
    pub include_id_distribution_bytes: bool,
    #[serde(default = "default_bytes_per_id")]
    pub bytes_per_id: u32,
    /// Counts the replicated tier's materialized lookups as dynamic memory.
    #[serde(default = "default_true")]
    pub count_dp_dynamic_memory: bool,
}

impl CostModelConfig {
    /// Local batch 4096, dimension 256, FP32, 6x replication overhead.
    pub fn reference() -> Self {
        Self::new(4096, 256, 4, 6.0)
    }

    pub fn new(local_batch: u32, embedding_dim: u32, scalar_bytes: u32, dp_replication: f64) -> Self {
        Self {
            local_batch,
            embedding_dim,
            scalar_bytes,
            dp_replication,
            dynamic_pass_count: 2,
            static_pass_count: 1,
            include_id_distribution_bytes: false,
            bytes_per_id: 8,
            count_dp_dynamic_memory: true,
        }
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        let positive = [
            ("local_batch", self.local_batch),
            ("embedding_dim", self.embedding_dim),
            ("scalar_bytes", self.scalar_bytes),
            ("dynamic_pass_count", self.dynamic_pass_count),
            ("static_pass_count", self.static_pass_count),
            ("bytes_per_id", self.bytes_per_id),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CostModelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.dp_replication < 1.0 || !self.dp_replication.is_finite() {
            return Err(CostModelError::InvalidConfig(format!(
                "dp_replication must be >= 1, got {}",
                self.dp_replication
            )));
        }
        Ok(())
    }

    /// Bytes of one embedding row, `D * s`.
    pub fn row_bytes(&self) -> f64 {
        self.embedding_dim as f64 * self.scalar_bytes as f64
    }

    /// Per-GPU bytes moved in one direction for one pass when `L` expected
    /// lookups per sample go through an all-to-all: `B * L * D * s`.
    pub fn lookup_payload_bytes(&self, expected_length: f64) -> f64 {
        self.local_batch as f64 * expected_length * self.row_bytes()
    }

    fn id_bytes(&self) -> f64 {
        if self.include_id_distribution_bytes {
            self.bytes_per_id as f64
        } else {
            0.0
        }
    }
}

/// Per-GPU expected costs of one table under one strategy.
///
/// Fields that do not apply to a strategy are exactly zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyCost {
    pub static_memory_bytes: f64,
    pub dynamic_memory_bytes: f64,
    /// Expected scalars looked up from the local shard.
    pub rows_accessed_scalars: f64,
    /// Expected lookup IDs exchanged before the lookup.
    pub input_id_count: f64,
    pub dynamic_comm_seconds: f64,
    pub static_comm_seconds: f64,
}

impl StrategyCost {
    pub fn total_memory_bytes(&self) -> f64 {
        self.static_memory_bytes + self.dynamic_memory_bytes
    }

    pub fn total_comm_seconds(&self) -> f64 {
        self.dynamic_comm_seconds + self.static_comm_seconds
    }

    fn fields(&self) -> [f64; 6] {
        [
            self.static_memory_bytes,
            self.dynamic_memory_bytes,
            self.rows_accessed_scalars,
            self.input_id_count,
            self.dynamic_comm_seconds,
            self.static_comm_seconds,
        ]
    }

    /// Largest relative difference over all fields.
    pub fn max_relative_diff(&self, other: &StrategyCost) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields())
            .map(|(a, b)| relative_diff(*a, b))
            .fold(0.0, f64::max)
    }
}

impl std::ops::Add for StrategyCost {
    type Output = StrategyCost;

    fn add(self, o: StrategyCost) -> StrategyCost {
        StrategyCost {
            static_memory_bytes: self.static_memory_bytes + o.static_memory_bytes,
            dynamic_memory_bytes: self.dynamic_memory_bytes + o.dynamic_memory_bytes,
            rows_accessed_scalars: self.rows_accessed_scalars + o.rows_accessed_scalars,
            input_id_count: self.input_id_count + o.input_id_count,
            dynamic_comm_seconds: self.dynamic_comm_seconds + o.dynamic_comm_seconds,
            static_comm_seconds: self.static_comm_seconds + o.static_comm_seconds,
        }
    }
}

impl std::ops::Sub for StrategyCost {
    type Output = StrategyCost;

    fn sub(self, o: StrategyCost) -> StrategyCost {
        StrategyCost {
            static_memory_bytes: self.static_memory_bytes - o.static_memory_bytes,
            dynamic_memory_bytes: self.dynamic_memory_bytes - o.dynamic_memory_bytes,
            rows_accessed_scalars: self.rows_accessed_scalars - o.rows_accessed_scalars,
            input_id_count: self.input_id_count - o.input_id_count,
            dynamic_comm_seconds: self.dynamic_comm_seconds - o.dynamic_comm_seconds,
            static_comm_seconds: self.static_comm_seconds - o.static_comm_seconds,
        }
    }
}

/// Expected per-GPU cost of a table with `num_rows` rows and expected
/// feature length `expected_length` under `strategy`.
pub fn table_cost(
    strategy: Strategy,
    num_rows: f64,
    expected_length: f64,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> StrategyCost {
    let e = num_rows;
    let l = expected_length;
    let b = cfg.local_batch as f64;
    let d = cfg.embedding_dim as f64;
    let s = cfg.scalar_bytes as f64;
    let u = topo.total_gpus() as f64;
    let w = topo.gpus_per_node() as f64;
    let r = cfg.dp_replication;
    let dyn_passes = cfg.dynamic_pass_count as f64;
    let static_passes = cfg.static_pass_count as f64;
    let id_bytes = cfg.id_bytes();

    let payload = b * l * d * s;
    match strategy {
        Strategy::Rw => StrategyCost {
            static_memory_bytes: (e / u) * d * s,
            dynamic_memory_bytes: 2.0 * payload,
            rows_accessed_scalars: u * b * (l / u) * d,
            input_id_count: b * l,
            dynamic_comm_seconds: (dyn_passes * payload + b * l * id_bytes) / topo.a2a_global(),
            static_comm_seconds: 0.0,
        },
        Strategy::Cw => StrategyCost {
            static_memory_bytes: e * (d / u) * s,
            dynamic_memory_bytes: 2.0 * payload,
            rows_accessed_scalars: u * b * l * (d / u),
            input_id_count: u * b * l,
            dynamic_comm_seconds: (dyn_passes * payload + u * b * l * id_bytes) / topo.a2a_global(),
            static_comm_seconds: 0.0,
        },
        Strategy::Dp => StrategyCost {
            static_memory_bytes: r * e * d * s,
            dynamic_memory_bytes: if cfg.count_dp_dynamic_memory { payload } else { 0.0 },
            rows_accessed_scalars: b * l * d,
            input_id_count: 0.0,
            dynamic_comm_seconds: 0.0,
            static_comm_seconds: static_passes * (e * d * s) / topo.ar_global(),
        },
        Strategy::Flex => StrategyCost {
            static_memory_bytes: r * (e / w) * d * s,
            dynamic_memory_bytes: 2.0 * payload,
            rows_accessed_scalars: w * b * (l / w) * d,
            input_id_count: b * l,
            dynamic_comm_seconds: (dyn_passes * payload + b * l * id_bytes) / topo.a2a_intra(),
            static_comm_seconds: static_passes * ((e / w) * d * s) / topo.ar_cross(),
        },
    }
}

/// Change in per-GPU (memory bytes, comm seconds) from moving one row with
/// probability `p` from row-wise to `strategy`.
pub fn marginal_cost(
    strategy: Strategy,
    p: f64,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> (f64, f64) {
    let moved = table_cost(strategy, 1.0, p, cfg, topo);
    let base = table_cost(Strategy::Rw, 1.0, p, cfg, topo);
    let memory = moved.total_memory_bytes() - base.total_memory_bytes();
    let comm = moved.total_comm_seconds() - base.total_comm_seconds();
    (memory, comm)
}

/// Marginal cost of replicating a row instead of row-wise sharding it.
pub fn marginal_cost_dp(p: f64, cfg: &CostModelConfig, topo: &Topology) -> (f64, f64) {
    marginal_cost(Strategy::Dp, p, cfg, topo)
}

/// Marginal cost of Flex-sharding a row instead of row-wise sharding it.
pub fn marginal_cost_flex(p: f64, cfg: &CostModelConfig, topo: &Topology) -> (f64, f64) {
    marginal_cost(Strategy::Flex, p, cfg, topo)
}

/// Row probabilities at which DP or Flex break even with row-wise sharding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    /// DP is memory-neutral with RW at this probability; rows above it save memory.
    pub p_mem_dp: f64,
    /// DP is communication-neutral with RW at this probability.
    pub p_comm_dp: f64,
    /// Per-row memory price of Flex vs RW in bytes. Independent of probability.
    pub flex_memory_price: f64,
    /// Flex is communication-neutral with RW here. `None` when intra-node
    /// all-to-all is no faster than the global one.
    pub p_comm_flex: Option<f64>,
}

/// Closed-form roots of the marginal functions.
pub fn closed_form_breakpoints(cfg: &CostModelConfig, topo: &Topology) -> Breakpoints {
    let b = cfg.local_batch as f64;
    let ds = cfg.row_bytes();
    let u = topo.total_gpus() as f64;
    let w = topo.gpus_per_node() as f64;
    let r = cfg.dp_replication;
    let dyn_passes = cfg.dynamic_pass_count as f64;
    let static_passes = cfg.static_pass_count as f64;
    let per_lookup = dyn_passes * ds + cfg.id_bytes();

    // DP saves (2 - 1) * B * p * D * s of dynamic memory per row, or 2x when
    // its own lookups are not counted.
    let dyn_saving = if cfg.count_dp_dynamic_memory { 1.0 } else { 2.0 };
    let p_mem_dp = ((r - 1.0 / u) / (b * dyn_saving)).max(0.0);
    let p_comm_dp = static_passes * ds * topo.a2a_global() / (topo.ar_global() * b * per_lookup);
    let flex_memory_price = (r / w - 1.0 / u) * ds;
    let p_comm_flex = (!topo.is_homogeneous()).then(|| {
        let saving_per_p = b * per_lookup * (1.0 / topo.a2a_global() - 1.0 / topo.a2a_intra());
        static_passes * ds / (w * topo.ar_cross()) / saving_per_p
    });
    Breakpoints { p_mem_dp, p_comm_dp, flex_memory_price, p_comm_flex }
}

fn root_of<F: Fn(f64) -> f64>(
    name: &'static str,
    f: F,
    closed_form: f64,
) -> Result<f64, CostModelError> {
    let hi = 10.0 * closed_form.max(1.0);
    let root = bisect(f, 0.0, hi).ok_or(CostModelError::NotBracketed(name))?;
    let agree = if closed_form == 0.0 {
        root.abs() <= BREAKPOINT_TOLERANCE * f64::MIN_POSITIVE.max(hi * f64::EPSILON)
    } else {
        relative_diff(root, closed_form) <= BREAKPOINT_TOLERANCE
    };
    if !agree {
        return Err(CostModelError::BreakpointMismatch { name, bisection: root, closed_form });
    }
    Ok(root)
}

/// Breakpoints found by bisection on the differenced marginals and checked
/// against [`closed_form_breakpoints`].
pub fn breakpoints(cfg: &CostModelConfig, topo: &Topology) -> Result<Breakpoints, CostModelError> {
    cfg.validate()?;
    let closed = closed_form_breakpoints(cfg, topo);

    let p_mem_dp = if closed.p_mem_dp == 0.0 {
        // R = 1 on a single GPU: DP and RW have identical static memory.
        0.0
    } else {
        root_of("DP memory", |p| marginal_cost_dp(p, cfg, topo).0, closed.p_mem_dp)?
    };
    let p_comm_dp = root_of("DP communication", |p| marginal_cost_dp(p, cfg, topo).1, closed.p_comm_dp)?;
    let flex_memory_price = marginal_cost_flex(0.0, cfg, topo).0;
    // The price can be exactly zero, so compare against the replicated row size.
    let price_scale = cfg.dp_replication * cfg.row_bytes();
    if (flex_memory_price - closed.flex_memory_price).abs() > BREAKPOINT_TOLERANCE * price_scale {
        return Err(CostModelError::BreakpointMismatch {
            name: "Flex memory price",
            bisection: flex_memory_price,
            closed_form: closed.flex_memory_price,
        });
    }
    let p_comm_flex = match closed.p_comm_flex {
        Some(cf) => Some(root_of(
            "Flex communication",
            |p| marginal_cost_flex(p, cfg, topo).1,
            cf,
        )?),
        None => None,
    };
    Ok(Breakpoints { p_mem_dp, p_comm_dp, flex_memory_price, p_comm_flex })
}

/// One point of the DP-normalized-to-RW cost curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub alpha: f64,
    pub mem_ratio: f64,
    pub comm_ratio: f64,
}

/// Total DP cost over total RW cost for a table of `num_rows` rows whose
/// feature length is `alpha * num_rows`.
pub fn normalized_ratio_curve<I>(
    num_rows: f64,
    alphas: I,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Vec<RatioPoint>
where
    I: IntoIterator<Item = f64>,
{
    alphas
        .into_iter()
        .map(|alpha| {
            let l = alpha * num_rows;
            let dp = table_cost(Strategy::Dp, num_rows, l, cfg, topo);
            let rw = table_cost(Strategy::Rw, num_rows, l, cfg, topo);
            RatioPoint {
                alpha,
                mem_ratio: dp.total_memory_bytes() / rw.total_memory_bytes(),
                comm_ratio: dp.total_comm_seconds() / rw.total_comm_seconds(),
            }
        })
        .collect()
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}
