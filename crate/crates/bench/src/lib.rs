//! Shared inputs for the criterion benches.

use rowshard_core::{CostModelConfig, RowDistribution, Topology};

/// Four tables shaped like a small production model: two long-sequence
/// tables and two shorter ones.
pub fn desk_distribution(seed: u64) -> RowDistribution {
    let shapes = [(0, 30_000, 1_000.0), (1, 30_000, 1_000.0), (2, 10_000, 500.0), (3, 10_000, 500.0)];
    let parts: Vec<RowDistribution> = shapes
        .iter()
        .map(|&(id, rows, length)| {
            RowDistribution::synthesize_zipf(id, rows, 1.1, length, seed + u64::from(id))
                .expect("valid zipf parameters")
        })
        .collect();
    RowDistribution::merge(&parts).expect("distinct table ids")
}

pub fn desk_config() -> (CostModelConfig, Topology) {
    (CostModelConfig::new(64, 256, 4, 6.0), Topology::reference_cluster())
}
