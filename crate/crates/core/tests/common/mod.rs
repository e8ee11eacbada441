//! Independent reference formulas for the integration suites.
//!
//! Written out longhand from the per-strategy cost tables instead of calling
//! into the library, so a transcription slip on either side shows up as a
//! mismatch.

#![allow(dead_code)]

use rowshard_core::{CostModelConfig, Strategy, Topology};

/// `[static_mem, dynamic_mem, rows_accessed, id_count, dynamic_comm, static_comm]`.
pub type CostVector = [f64; 6];

pub fn oracle_table_cost(strategy: Strategy, e: f64, l: f64, cfg: &CostModelConfig, topo: &Topology) -> CostVector {
    let b = cfg.local_batch as f64;
    let d = cfg.embedding_dim as f64;
    let s = cfg.scalar_bytes as f64;
    let r = cfg.dp_replication;
    let n = topo.num_nodes() as f64;
    let w = topo.gpus_per_node() as f64;
    let u = n * w;
    let dp = cfg.dynamic_pass_count as f64;
    let sp = cfg.static_pass_count as f64;
    let idb = if cfg.include_id_distribution_bytes { cfg.bytes_per_id as f64 } else { 0.0 };
    match strategy {
        Strategy::Rw => [
            e * d * s / u,
            2.0 * b * l * d * s,
            b * l * d,
            b * l,
            (dp * b * l * d * s + idb * b * l) / topo.a2a_global(),
            0.0,
        ],
        Strategy::Cw => [
            e * d * s / u,
            2.0 * b * l * d * s,
            b * l * d,
            u * b * l,
            (dp * b * l * d * s + idb * u * b * l) / topo.a2a_global(),
            0.0,
        ],
        Strategy::Dp => [
            r * e * d * s,
            if cfg.count_dp_dynamic_memory { b * l * d * s } else { 0.0 },
            b * l * d,
            0.0,
            0.0,
            sp * e * d * s / topo.ar_global(),
        ],
        Strategy::Flex => [
            r * e * d * s / w,
            2.0 * b * l * d * s,
            b * l * d,
            b * l,
            (dp * b * l * d * s + idb * b * l) / topo.a2a_intra(),
            sp * e * d * s / w / topo.ar_cross(),
        ],
    }
}

pub fn oracle_marginal(strategy: Strategy, p: f64, cfg: &CostModelConfig, topo: &Topology) -> (f64, f64) {
    let a = oracle_table_cost(strategy, 1.0, p, cfg, topo);
    let b = oracle_table_cost(Strategy::Rw, 1.0, p, cfg, topo);
    ((a[0] + a[1]) - (b[0] + b[1]), (a[4] + a[5]) - (b[4] + b[5]))
}

/// Breakpoints solved by hand from the marginal expressions:
/// `(p_mem_dp, p_comm_dp, flex_price, p_comm_flex)`.
pub fn oracle_breakpoints(cfg: &CostModelConfig, topo: &Topology) -> (f64, f64, f64, Option<f64>) {
    let b = cfg.local_batch as f64;
    let ds = (cfg.embedding_dim * cfg.scalar_bytes) as f64;
    let r = cfg.dp_replication;
    let w = topo.gpus_per_node() as f64;
    let u = topo.total_gpus() as f64;
    let idb = if cfg.include_id_distribution_bytes { cfg.bytes_per_id as f64 } else { 0.0 };
    let lookup = cfg.dynamic_pass_count as f64 * ds + idb;
    let sp = cfg.static_pass_count as f64;
    // DP memory: (R - 1/U) Ds + B p Ds (1 or 0) - 2 B p Ds = 0
    let saved_per_p = if cfg.count_dp_dynamic_memory { b * ds } else { 2.0 * b * ds };
    let p_mem = ((r - 1.0 / u) * ds / saved_per_p).max(0.0);
    // DP comm: sp Ds / ar_g - B p lookup / a2a_g = 0
    let p_comm = sp * ds / topo.ar_global() * topo.a2a_global() / (b * lookup);
    let price = r * ds / w - ds / u;
    let p_flex = if topo.a2a_intra() > topo.a2a_global() {
        Some(sp * ds / w / topo.ar_cross() / (b * lookup * (1.0 / topo.a2a_global() - 1.0 / topo.a2a_intra())))
    } else {
        None
    };
    (p_mem, p_comm, price, p_flex)
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Desk-scale training setup: local batch 64 on the 4x8 reference cluster.
pub fn desk() -> (CostModelConfig, Topology) {
    (CostModelConfig::new(64, 256, 4, 6.0), Topology::reference_cluster())
}

/// Four tables with the long/short sequence mix of a production model at 1/1000 size.
pub fn desk_tables(seed: u64) -> rowshard_core::RowDistribution {
    let shapes = [(0u32, 30_000u64, 1_000.0), (1, 30_000, 1_000.0), (2, 10_000, 500.0), (3, 10_000, 500.0)];
    let parts: Vec<_> = shapes
        .iter()
        .map(|&(id, rows, l)| {
            rowshard_core::RowDistribution::synthesize_zipf(id, rows, 1.1, l, seed.wrapping_add(u64::from(id)))
                .unwrap()
        })
        .collect();
    rowshard_core::RowDistribution::merge(&parts).unwrap()
}
