//! Monte-Carlo replay of synthetic training batches against a tier placement.
//!
//! Each iteration draws `U * B` samples. A sample's occurrence count is
//! `Poisson(L)` and each occurrence picks a row with probability `p_i / L`;
//! by Poisson splitting this is the same as every row occurring
//! `Poisson(p_i)` times independently. Iteration `k` uses its own ChaCha
//! stream, so results do not depend on how iterations are scheduled.
//!
//! Byte accounting per looked-up row, for the requesting GPU `g`:
//!
//! * RW: the owner sends `D * s` bytes over the global all-to-all and `g`
//!   receives them (also when `g` is the owner).
//! * Flex: the same over the intra-node all-to-all, served by the GPU in
//!   `g`'s node holding the row's slot.
//! * DP: a local lookup.
//!
//! Latency of a collective is the busiest GPU's bytes over the bandwidth,
//! with no per-message constant.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::CostModelConfig;
use crate::distribution::{RowDistribution, RowKey};
use crate::numeric::{mix64, CompensatedSum};
use crate::planner::{CostReport, PlannerError, Tier, TierAssignment};
use crate::topology::Topology;

/// Default relative tolerance used by [`compare`].
pub const DEFAULT_COMPARE_TOLERANCE: f64 = 0.02;

const FIBONACCI: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("distribution has no expected accesses (L = 0); nothing to simulate")]
    NoAccesses,
    #[error("cannot build row sampler: {0}")]
    Sampler(String),
    #[error("placement covers {placement} rows but the workload draws from {workload}")]
    PlacementMismatch { placement: usize, workload: usize },
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("threads must be at least 1")]
    ZeroThreads,
    #[error(transparent)]
    Plan(#[from] PlannerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// 64-bit multiplicative hash of a row.
///
/// The key is `row_id` plus a per-table salt from the splitmix64 finalizer;
/// the key is multiplied by the 64-bit golden-ratio constant. Consecutive row
/// ids then form a Weyl sequence, which spreads them over the buckets far more
/// evenly than an ideal random hash would.
pub fn row_hash(key: RowKey, hash_seed: u64) -> u64 {
    let salt = mix64(u64::from(key.table_id) ^ hash_seed);
    key.row_id.wrapping_add(salt).wrapping_mul(FIBONACCI)
}

/// Maps a hash to `[0, buckets)` by taking the high bits of `hash * buckets`.
#[inline]
pub fn bucket(hash: u64, buckets: u32) -> u32 {
    ((u128::from(hash) * u128::from(buckets)) >> 64) as u32
}

/// GPU that owns an RW row.
pub fn rw_owner(key: RowKey, hash_seed: u64, topo: &Topology) -> u32 {
    bucket(row_hash(key, hash_seed), topo.total_gpus())
}

/// Intra-node slot of a Flex row; the row lives on that slot in every node.
pub fn flex_slot(key: RowKey, hash_seed: u64, topo: &Topology) -> u32 {
    bucket(row_hash(key, hash_seed), topo.gpus_per_node())
}

/// Where a single row lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tier", rename_all = "lowercase")]
pub enum Place {
    Dp,
    Flex { slot: u32 },
    Rw { owner: u32 },
}

impl Place {
    pub fn tier(self) -> Tier {
        match self {
            Place::Dp => Tier::Dp,
            Place::Flex { .. } => Tier::Flex,
            Place::Rw { .. } => Tier::Rw,
        }
    }

    /// GPUs holding a copy of the row, with node-major GPU numbering.
    pub fn gpus(self, topo: &Topology) -> Vec<u32> {
        let w = topo.gpus_per_node();
        match self {
            Place::Dp => (0..topo.total_gpus()).collect(),
            Place::Flex { slot } => (0..topo.num_nodes()).map(|n| n * w + slot).collect(),
            Place::Rw { owner } => vec![owner],
        }
    }
}

/// Placement of every row of a distribution under a tier assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// Indexed like `dist.rows()`.
    places: Vec<Place>,
    /// Rows held per GPU, including rows never observed.
    rw_rows_per_gpu: Vec<u64>,
    flex_rows_per_slot: Vec<u64>,
    dp_rows: u64,
}

impl Placement {
    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn dp_rows(&self) -> u64 {
        self.dp_rows
    }

    pub fn flex_rows_per_slot(&self) -> &[u64] {
        &self.flex_rows_per_slot
    }

    pub fn rw_rows_per_gpu(&self) -> &[u64] {
        &self.rw_rows_per_gpu
    }

    /// Static bytes held by `gpu`: replicated tiers carry the optimizer
    /// multiplier `R`, RW shards do not.
    pub fn static_memory_bytes(&self, gpu: u32, cfg: &CostModelConfig, topo: &Topology) -> f64 {
        let ds = cfg.row_bytes();
        let slot = (gpu % topo.gpus_per_node()) as usize;
        cfg.dp_replication * (self.dp_rows + self.flex_rows_per_slot[slot]) as f64 * ds
            + self.rw_rows_per_gpu[gpu as usize] as f64 * ds
    }
}

/// Places every row of every table in `assignment`, including unobserved rows.
pub fn assign_rows(
    assignment: &TierAssignment,
    dist: &RowDistribution,
    topo: &Topology,
    hash_seed: u64,
) -> Result<Placement, SimError> {
    let u = topo.total_gpus();
    let w = topo.gpus_per_node();
    let place_of = |key: RowKey| -> Result<Place, PlannerError> {
        Ok(match assignment.tier_of(key)? {
            Tier::Dp => Place::Dp,
            Tier::Flex => Place::Flex { slot: flex_slot(key, hash_seed, topo) },
            Tier::Rw => Place::Rw { owner: rw_owner(key, hash_seed, topo) },
        })
    };
    let places = dist.rows().iter().map(|r| place_of(r.key())).collect::<Result<Vec<_>, _>>()?;

    let mut rw_rows_per_gpu = vec![0u64; u as usize];
    let mut flex_rows_per_slot = vec![0u64; w as usize];
    let mut dp_rows = 0;
    for (&table_id, &num_rows) in &assignment.tables {
        for row_id in 0..num_rows {
            let key = RowKey { table_id, row_id };
            if assignment.dp.contains(&key) {
                dp_rows += 1;
            } else if assignment.flex.contains(&key) {
                flex_rows_per_slot[flex_slot(key, hash_seed, topo) as usize] += 1;
            } else {
                rw_rows_per_gpu[rw_owner(key, hash_seed, topo) as usize] += 1;
            }
        }
    }
    Ok(Placement { places, rw_rows_per_gpu, flex_rows_per_slot, dp_rows })
}

/// Seeded generator of synthetic batches over a distribution.
///
/// Nothing is materialized: iteration `k` is regenerated on demand from
/// `(seed, k)`.
#[derive(Debug, Clone)]
pub struct Workload {
    sampler: WeightedAliasIndex<f64>,
    num_rows: usize,
    expected_length: f64,
    local_batch: u32,
    num_gpus: u32,
    seed: u64,
    num_iterations: u32,
}

/// Builds the batch generator for `num_iterations` iterations of `U` local
/// batches of `B` samples each.
pub fn sample_workload(
    dist: &RowDistribution,
    cfg: &CostModelConfig,
    topo: &Topology,
    seed: u64,
    num_iterations: u32,
) -> Result<Workload, SimError> {
    let expected_length = dist.total_expected_length();
    if expected_length.is_nan() || expected_length <= 0.0 {
        return Err(SimError::NoAccesses);
    }
    let weights = dist.rows().iter().map(|r| r.probability).collect();
    let sampler = WeightedAliasIndex::new(weights).map_err(|e| SimError::Sampler(e.to_string()))?;
    Ok(Workload {
        sampler,
        num_rows: dist.len(),
        expected_length,
        local_batch: cfg.local_batch,
        num_gpus: topo.total_gpus(),
        seed,
        num_iterations,
    })
}

impl Workload {
    pub fn num_iterations(&self) -> u32 {
        self.num_iterations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn expected_length(&self) -> f64 {
        self.expected_length
    }

    pub fn samples_per_iteration(&self) -> u64 {
        u64::from(self.num_gpus) * u64::from(self.local_batch)
    }

    fn rng(&self, iteration: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::from(iteration));
        rng
    }

    /// Calls `f(gpu, sample, row_index)` for every occurrence in iteration
    /// `iteration`, where `row_index` indexes the distribution's sorted rows
    /// and `sample` counts within the GPU's local batch.
    pub fn for_each_occurrence<F: FnMut(u32, u32, usize)>(&self, iteration: u32, mut f: F) {
        let mut rng = self.rng(iteration);
        let lengths = Poisson::new(self.expected_length).expect("L is positive and finite");
        for gpu in 0..self.num_gpus {
            for sample in 0..self.local_batch {
                let n = lengths.sample(&mut rng) as u64;
                for _ in 0..n {
                    f(gpu, sample, self.sampler.sample(&mut rng));
                }
            }
        }
    }

    /// Occurrences of iteration `iteration` as `(gpu, sample, row_index)`.
    pub fn iteration(&self, iteration: u32) -> Vec<(u32, u32, usize)> {
        let mut out = Vec::new();
        self.for_each_occurrence(iteration, |g, s, r| out.push((g, s, r)));
        out
    }
}

macro_rules! metrics {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: f64,)*
        }

        impl $name {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn values(&self) -> Vec<f64> {
                vec![$(self.$field),*]
            }

            fn from_values(v: &[f64]) -> Self {
                let mut it = v.iter().copied();
                Self { $($field: it.next().expect("one value per metric"),)* }
            }
        }
    };
}

metrics! {
    /// Per-GPU metrics of one iteration. Byte counts are for a single pass;
    /// latencies include every pass.
    IterationMetrics {
        /// Mean bytes sent (equal to mean received) per GPU.
        global_a2a_bytes_per_gpu,
        global_a2a_bytes_max,
        /// Bytes sent over the global all-to-all by all GPUs together.
        global_a2a_total_bytes,
        intra_a2a_bytes_per_gpu,
        intra_a2a_bytes_max,
        ar_global_bytes_per_gpu,
        ar_cross_bytes_per_gpu,
        ar_cross_bytes_max,
        global_a2a_seconds,
        intra_a2a_seconds,
        ar_global_seconds,
        ar_cross_seconds,
        dynamic_memory_bytes_mean,
        peak_dynamic_memory_bytes_per_gpu,
        rows_accessed_min,
        rows_accessed_max,
        rows_accessed_mean,
        load_imbalance,
    }
}

impl IterationMetrics {
    pub fn total_comm_seconds(&self) -> f64 {
        self.global_a2a_seconds + self.intra_a2a_seconds + self.ar_global_seconds + self.ar_cross_seconds
    }

    /// Latency without the overlappable intra-node all-to-all and cross-node all-reduce.
    pub fn blocking_comm_seconds(&self) -> f64 {
        self.global_a2a_seconds + self.ar_global_seconds
    }
}

/// Measured costs of a placement over a workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub hash_seed: u64,
    pub num_iterations: u32,
    /// Mean over iterations, except the peak dynamic memory which is the
    /// maximum over iterations.
    pub summary: IterationMetrics,
    pub static_memory_bytes_max: f64,
    pub static_memory_bytes_mean: f64,
    /// Largest static plus peak dynamic bytes on any GPU.
    pub peak_memory_bytes_per_gpu: f64,
    pub iterations: Vec<IterationMetrics>,
}

impl SimReport {
    /// Share of `baseline`'s global all-to-all volume this run avoided.
    pub fn reduction_vs(&self, baseline: &SimReport) -> f64 {
        let base: f64 = baseline.iterations.iter().map(|m| m.global_a2a_total_bytes).sum();
        let ours: f64 = self.iterations.iter().map(|m| m.global_a2a_total_bytes).sum();
        if base > 0.0 {
            1.0 - ours / base
        } else {
            0.0
        }
    }

    /// `iteration,metric,value` rows; the summary uses iteration `mean`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "iteration,metric,value")?;
        for (k, m) in self.iterations.iter().enumerate() {
            for (name, v) in IterationMetrics::NAMES.iter().zip(m.values()) {
                writeln!(w, "{k},{name},{v:e}")?;
            }
        }
        for (name, v) in IterationMetrics::NAMES.iter().zip(self.summary.values()) {
            writeln!(w, "mean,{name},{v:e}")?;
        }
        w.flush()
    }

    /// A report whose per-GPU means equal the prediction exactly, for
    /// checking [`compare`] itself.
    pub fn from_prediction(predicted: &CostReport) -> Self {
        let summary = IterationMetrics {
            global_a2a_bytes_per_gpu: predicted.global_a2a.bytes_per_gpu,
            global_a2a_bytes_max: predicted.global_a2a.bytes_per_gpu,
            intra_a2a_bytes_per_gpu: predicted.intra_a2a.bytes_per_gpu,
            intra_a2a_bytes_max: predicted.intra_a2a.bytes_per_gpu,
            ar_global_bytes_per_gpu: predicted.global_all_reduce.bytes_per_gpu,
            ar_cross_bytes_per_gpu: predicted.cross_all_reduce.bytes_per_gpu,
            ar_cross_bytes_max: predicted.cross_all_reduce.bytes_per_gpu,
            global_a2a_seconds: predicted.global_a2a.seconds,
            intra_a2a_seconds: predicted.intra_a2a.seconds,
            ar_global_seconds: predicted.global_all_reduce.seconds,
            ar_cross_seconds: predicted.cross_all_reduce.seconds,
            dynamic_memory_bytes_mean: predicted.dynamic_memory_bytes,
            peak_dynamic_memory_bytes_per_gpu: predicted.dynamic_memory_bytes,
            ..IterationMetrics::default()
        };
        Self {
            seed: 0,
            hash_seed: 0,
            num_iterations: 0,
            summary,
            static_memory_bytes_max: predicted.static_memory_bytes,
            static_memory_bytes_mean: predicted.static_memory_bytes,
            peak_memory_bytes_per_gpu: predicted.total_memory_bytes,
            iterations: Vec::new(),
        }
    }
}

struct IterationResult {
    metrics: IterationMetrics,
    dynamic_bytes: Vec<f64>,
}

#[derive(Default, Clone)]
struct Counters {
    global_send: Vec<u64>,
    global_recv: Vec<u64>,
    intra_send: Vec<u64>,
    intra_recv: Vec<u64>,
    local: Vec<u64>,
}

impl Counters {
    fn new(u: usize) -> Self {
        Self {
            global_send: vec![0; u],
            global_recv: vec![0; u],
            intra_send: vec![0; u],
            intra_recv: vec![0; u],
            local: vec![0; u],
        }
    }

    #[inline]
    fn record(&mut self, place: Place, gpu: u32, w: u32) {
        match place {
            Place::Rw { owner } => {
                self.global_send[owner as usize] += 1;
                self.global_recv[gpu as usize] += 1;
            }
            Place::Flex { slot } => {
                let server = gpu - gpu % w + slot;
                self.intra_send[server as usize] += 1;
                self.intra_recv[gpu as usize] += 1;
            }
            Place::Dp => self.local[gpu as usize] += 1,
        }
    }
}

fn finish_iteration(
    c: &Counters,
    placement: &Placement,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> IterationResult {
    let ds = cfg.row_bytes();
    let u = topo.total_gpus() as usize;
    let passes = f64::from(cfg.dynamic_pass_count);
    let static_passes = f64::from(cfg.static_pass_count);
    let id_bytes = if cfg.include_id_distribution_bytes { f64::from(cfg.bytes_per_id) } else { 0.0 };

    debug_assert_eq!(c.global_send.iter().sum::<u64>(), c.global_recv.iter().sum::<u64>());
    debug_assert_eq!(c.intra_send.iter().sum::<u64>(), c.intra_recv.iter().sum::<u64>());

    // Busiest direction per GPU; ids travel opposite to the embeddings they request.
    let a2a_seconds = |send: &[u64], recv: &[u64], bw: f64| {
        let worst = send
            .iter()
            .zip(recv)
            .map(|(&s, &r)| passes * s.max(r) as f64 * ds + id_bytes * s.max(r) as f64)
            .fold(0.0, f64::max);
        worst / bw
    };
    let total = |v: &[u64]| v.iter().sum::<u64>() as f64;
    let max = |v: &[u64]| v.iter().copied().max().unwrap_or(0) as f64;

    let dynamic_bytes: Vec<f64> = (0..u)
        .map(|g| {
            let local = if cfg.count_dp_dynamic_memory { c.local[g] } else { 0 };
            (c.global_send[g] + c.global_recv[g] + c.intra_send[g] + c.intra_recv[g] + local) as f64 * ds
        })
        .collect();
    let accessed: Vec<u64> = (0..u).map(|g| c.global_send[g] + c.intra_send[g] + c.local[g]).collect();
    let accessed_mean = total(&accessed) / u as f64;

    let ar_global_bytes = placement.dp_rows as f64 * ds;
    let ar_cross: Vec<f64> = placement.flex_rows_per_slot.iter().map(|&n| n as f64 * ds).collect();
    let ar_cross_mean = ar_cross.iter().sum::<f64>() / ar_cross.len() as f64;
    let ar_cross_max = ar_cross.iter().copied().fold(0.0, f64::max);

    let metrics = IterationMetrics {
        global_a2a_bytes_per_gpu: total(&c.global_send) * ds / u as f64,
        global_a2a_bytes_max: max(&c.global_send).max(max(&c.global_recv)) * ds,
        global_a2a_total_bytes: total(&c.global_send) * ds,
        intra_a2a_bytes_per_gpu: total(&c.intra_send) * ds / u as f64,
        intra_a2a_bytes_max: max(&c.intra_send).max(max(&c.intra_recv)) * ds,
        ar_global_bytes_per_gpu: ar_global_bytes,
        ar_cross_bytes_per_gpu: ar_cross_mean,
        ar_cross_bytes_max: ar_cross_max,
        global_a2a_seconds: a2a_seconds(&c.global_send, &c.global_recv, topo.a2a_global()),
        intra_a2a_seconds: a2a_seconds(&c.intra_send, &c.intra_recv, topo.a2a_intra()),
        ar_global_seconds: static_passes * ar_global_bytes / topo.ar_global(),
        ar_cross_seconds: static_passes * ar_cross_max / topo.ar_cross(),
        dynamic_memory_bytes_mean: dynamic_bytes.iter().sum::<f64>() / u as f64,
        peak_dynamic_memory_bytes_per_gpu: dynamic_bytes.iter().copied().fold(0.0, f64::max),
        rows_accessed_min: accessed.iter().copied().min().unwrap_or(0) as f64,
        rows_accessed_max: max(&accessed),
        rows_accessed_mean: accessed_mean,
        load_imbalance: if accessed_mean > 0.0 { max(&accessed) / accessed_mean } else { 1.0 },
    };
    IterationResult { metrics, dynamic_bytes }
}

fn run_iteration(
    workload: &Workload,
    iteration: u32,
    placements: &[&Placement],
    cfg: &CostModelConfig,
    topo: &Topology,
) -> Vec<IterationResult> {
    let u = topo.total_gpus() as usize;
    let w = topo.gpus_per_node();
    let mut counters = vec![Counters::new(u); placements.len()];
    workload.for_each_occurrence(iteration, |gpu, _, row| {
        for (c, p) in counters.iter_mut().zip(placements) {
            c.record(p.places[row], gpu, w);
        }
    });
    counters.iter().zip(placements).map(|(c, p)| finish_iteration(c, p, cfg, topo)).collect()
}

fn summarize(
    results: Vec<IterationResult>,
    placement: &Placement,
    workload: &Workload,
    hash_seed: u64,
    cfg: &CostModelConfig,
    topo: &Topology,
) -> SimReport {
    let u = topo.total_gpus();
    let n = IterationMetrics::NAMES.len();
    let mut sums = vec![CompensatedSum::new(); n];
    let mut peak_dyn = vec![0.0f64; u as usize];
    let mut iterations = Vec::with_capacity(results.len());
    for r in results {
        for (s, v) in sums.iter_mut().zip(r.metrics.values()) {
            s.add(v);
        }
        for (p, d) in peak_dyn.iter_mut().zip(&r.dynamic_bytes) {
            *p = p.max(*d);
        }
        iterations.push(r.metrics);
    }
    let count = iterations.len().max(1) as f64;
    let mut summary =
        IterationMetrics::from_values(&sums.iter().map(|s| s.value() / count).collect::<Vec<_>>());
    summary.peak_dynamic_memory_bytes_per_gpu =
        iterations.iter().map(|m| m.peak_dynamic_memory_bytes_per_gpu).fold(0.0, f64::max);

    let statics: Vec<f64> = (0..u).map(|g| placement.static_memory_bytes(g, cfg, topo)).collect();
    let peak_memory = statics.iter().zip(&peak_dyn).map(|(s, d)| s + d).fold(0.0, f64::max);
    SimReport {
        seed: workload.seed,
        hash_seed,
        num_iterations: workload.num_iterations,
        summary,
        static_memory_bytes_max: statics.iter().copied().fold(0.0, f64::max),
        static_memory_bytes_mean: statics.iter().sum::<f64>() / f64::from(u),
        peak_memory_bytes_per_gpu: peak_memory,
        iterations,
    }
}

/// Replays `workload` once and measures every placement on the same occurrences.
///
/// Iterations run on a pool of `threads` workers; results are identical for
/// any thread count.
pub fn simulate_many(
    placements: &[&Placement],
    workload: &Workload,
    cfg: &CostModelConfig,
    topo: &Topology,
    hash_seed: u64,
    threads: usize,
) -> Result<Vec<SimReport>, SimError> {
    if threads == 0 {
        return Err(SimError::ZeroThreads);
    }
    for p in placements {
        if p.places.len() != workload.num_rows {
            return Err(SimError::PlacementMismatch { placement: p.places.len(), workload: workload.num_rows });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let per_iteration: Vec<Vec<IterationResult>> = pool.install(|| {
        (0..workload.num_iterations)
            .into_par_iter()
            .map(|k| run_iteration(workload, k, placements, cfg, topo))
            .collect()
    });

    let mut by_placement: Vec<Vec<IterationResult>> =
        placements.iter().map(|_| Vec::with_capacity(per_iteration.len())).collect();
    for results in per_iteration {
        for (slot, r) in by_placement.iter_mut().zip(results) {
            slot.push(r);
        }
    }
    Ok(by_placement
        .into_iter()
        .zip(placements)
        .map(|(results, p)| summarize(results, p, workload, hash_seed, cfg, topo))
        .collect())
}

/// Measures a single placement over `workload`.
pub fn simulate(
    placement: &Placement,
    workload: &Workload,
    cfg: &CostModelConfig,
    topo: &Topology,
    hash_seed: u64,
    threads: usize,
) -> Result<SimReport, SimError> {
    let mut reports = simulate_many(&[placement], workload, cfg, topo, hash_seed, threads)?;
    Ok(reports.remove(0))
}

/// A plan's run next to the pure-RW run on identical batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimComparison {
    pub plan: SimReport,
    pub baseline: SimReport,
    pub global_a2a_reduction: f64,
    /// Baseline total latency over plan total latency.
    pub speedup: f64,
    /// Same ratio with the overlappable collectives left out.
    pub speedup_blocking: f64,
}

/// Simulates `assignment` and the pure-RW baseline on one shared workload.
pub fn simulate_against_baseline(
    assignment: &TierAssignment,
    dist: &RowDistribution,
    workload: &Workload,
    cfg: &CostModelConfig,
    topo: &Topology,
    hash_seed: u64,
    threads: usize,
) -> Result<SimComparison, SimError> {
    let plan = assign_rows(assignment, dist, topo, hash_seed)?;
    let rw = assign_rows(&TierAssignment::pure_rw(dist), dist, topo, hash_seed)?;
    let mut reports = simulate_many(&[&plan, &rw], workload, cfg, topo, hash_seed, threads)?;
    let baseline = reports.pop().expect("two reports");
    let plan = reports.pop().expect("two reports");
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else if a > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(SimComparison {
        global_a2a_reduction: plan.reduction_vs(&baseline),
        speedup: ratio(baseline.summary.total_comm_seconds(), plan.summary.total_comm_seconds()),
        speedup_blocking: ratio(
            baseline.summary.blocking_comm_seconds(),
            plan.summary.blocking_comm_seconds(),
        ),
        plan,
        baseline,
    })
}

/// One row of the predicted-vs-simulated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub metric: String,
    pub predicted: f64,
    pub simulated: f64,
    /// `(simulated - predicted) / predicted`; zero when both are zero.
    pub relative_error: f64,
    pub flagged: bool,
}

fn discrepancy(metric: &str, predicted: f64, simulated: f64, tolerance: f64) -> Discrepancy {
    let relative_error = if predicted == simulated {
        0.0
    } else if predicted == 0.0 {
        f64::INFINITY
    } else {
        (simulated - predicted) / predicted
    };
    Discrepancy {
        metric: metric.to_string(),
        predicted,
        simulated,
        relative_error,
        flagged: relative_error.is_nan() || relative_error.abs() > tolerance,
    }
}

/// Relative error of each simulated metric against the prediction.
///
/// Byte volumes are compared as per-GPU means. Latencies are compared as
/// reported, so a skewed workload shows up as a latency excess.
pub fn compare(predicted: &CostReport, simulated: &SimReport, tolerance: f64) -> Vec<Discrepancy> {
    let s = &simulated.summary;
    vec![
        discrepancy("global_a2a_bytes_per_gpu", predicted.global_a2a.bytes_per_gpu, s.global_a2a_bytes_per_gpu, tolerance),
        discrepancy("intra_a2a_bytes_per_gpu", predicted.intra_a2a.bytes_per_gpu, s.intra_a2a_bytes_per_gpu, tolerance),
        discrepancy("ar_global_bytes_per_gpu", predicted.global_all_reduce.bytes_per_gpu, s.ar_global_bytes_per_gpu, tolerance),
        discrepancy("ar_cross_bytes_per_gpu", predicted.cross_all_reduce.bytes_per_gpu, s.ar_cross_bytes_per_gpu, tolerance),
        discrepancy("global_a2a_seconds", predicted.global_a2a.seconds, s.global_a2a_seconds, tolerance),
        discrepancy("intra_a2a_seconds", predicted.intra_a2a.seconds, s.intra_a2a_seconds, tolerance),
        discrepancy("ar_global_seconds", predicted.global_all_reduce.seconds, s.ar_global_seconds, tolerance),
        discrepancy("ar_cross_seconds", predicted.cross_all_reduce.seconds, s.ar_cross_seconds, tolerance),
        discrepancy("dynamic_memory_bytes_mean", predicted.dynamic_memory_bytes, s.dynamic_memory_bytes_mean, tolerance),
    ]
}

/// Per-GPU row counts of `rows` under RW hashing, for uniformity checks.
pub fn shard_row_counts<I: IntoIterator<Item = RowKey>>(rows: I, hash_seed: u64, topo: &Topology) -> Vec<u64> {
    let mut counts = vec![0u64; topo.total_gpus() as usize];
    for key in rows {
        counts[rw_owner(key, hash_seed, topo) as usize] += 1;
    }
    counts
}

/// Per-tier occurrence counts in one iteration, keyed by tier name.
pub fn tier_occurrences(workload: &Workload, placement: &Placement, iteration: u32) -> BTreeMap<&'static str, u64> {
    let mut out = BTreeMap::new();
    workload.for_each_occurrence(iteration, |_, _, row| {
        *out.entry(placement.places[row].tier().name()).or_insert(0) += 1;
    });
    out
}
