//! Cluster shape and measured collective bandwidths.
//!
//! Files carry bandwidths in GiB/s; internally everything is bytes/second.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes in one GiB.
pub const GIB: f64 = (1u64 << 30) as f64;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology is missing field `{0}`")]
    MissingField(&'static str),
    #[error("topology field `{field}` must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error(
        "degenerate topology: a2a_intra ({intra_gibs} GiB/s) must be >= a2a_global ({global_gibs} GiB/s)"
    )]
    Degenerate { intra_gibs: f64, global_gibs: f64 },
    #[error("failed to parse topology document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to read topology file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Validated training cluster description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "TopologyFile")]
pub struct Topology {
    num_nodes: u32,
    gpus_per_node: u32,
    a2a_global: f64,
    a2a_intra: f64,
    ar_global: f64,
    ar_cross: f64,
}

/// On-disk representation. Every field is optional so that a missing key can
/// be reported by name instead of as a generic deserialization failure.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpus_per_node: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2a_global_gibs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2a_intra_gibs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar_global_gibs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar_cross_gibs: Option<f64>,
}

impl From<Topology> for TopologyFile {
    fn from(t: Topology) -> Self {
        Self {
            num_nodes: Some(t.num_nodes.into()),
            gpus_per_node: Some(t.gpus_per_node.into()),
            a2a_global_gibs: Some(t.a2a_global / GIB),
            a2a_intra_gibs: Some(t.a2a_intra / GIB),
            ar_global_gibs: Some(t.ar_global / GIB),
            ar_cross_gibs: Some(t.ar_cross / GIB),
        }
    }
}

impl TryFrom<TopologyFile> for Topology {
    type Error = TopologyError;

    fn try_from(f: TopologyFile) -> Result<Self, Self::Error> {
        fn count(v: Option<i64>, field: &'static str) -> Result<u32, TopologyError> {
            let v = v.ok_or(TopologyError::MissingField(field))?;
            if v < 1 || v > u32::MAX as i64 {
                return Err(TopologyError::NonPositive { field, value: v as f64 });
            }
            Ok(v as u32)
        }
        fn bw(v: Option<f64>, field: &'static str) -> Result<f64, TopologyError> {
            let v = v.ok_or(TopologyError::MissingField(field))?;
            if v <= 0.0 || !v.is_finite() {
                return Err(TopologyError::NonPositive { field, value: v });
            }
            Ok(v)
        }
        Topology::from_gibs(
            count(f.num_nodes, "num_nodes")?,
            count(f.gpus_per_node, "gpus_per_node")?,
            bw(f.a2a_global_gibs, "a2a_global_gibs")?,
            bw(f.a2a_intra_gibs, "a2a_intra_gibs")?,
            bw(f.ar_global_gibs, "ar_global_gibs")?,
            bw(f.ar_cross_gibs, "ar_cross_gibs")?,
        )
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = TopologyFile::deserialize(d)?;
        Topology::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl Topology {
    /// Builds a topology from bandwidths in bytes/second.
    pub fn new(
        num_nodes: u32,
        gpus_per_node: u32,
        a2a_global: f64,
        a2a_intra: f64,
        ar_global: f64,
        ar_cross: f64,
    ) -> Result<Self, TopologyError> {
        if num_nodes == 0 {
            return Err(TopologyError::NonPositive { field: "num_nodes", value: 0.0 });
        }
        if gpus_per_node == 0 {
            return Err(TopologyError::NonPositive { field: "gpus_per_node", value: 0.0 });
        }
        for (field, value) in [
            ("a2a_global", a2a_global),
            ("a2a_intra", a2a_intra),
            ("ar_global", ar_global),
            ("ar_cross", ar_cross),
        ] {
            if value <= 0.0 || !value.is_finite() {
                return Err(TopologyError::NonPositive { field, value });
            }
        }
        if a2a_intra < a2a_global {
            return Err(TopologyError::Degenerate {
                intra_gibs: a2a_intra / GIB,
                global_gibs: a2a_global / GIB,
            });
        }
        Ok(Self { num_nodes, gpus_per_node, a2a_global, a2a_intra, ar_global, ar_cross })
    }

    /// Builds a topology from bandwidths in GiB/s.
    pub fn from_gibs(
        num_nodes: u32,
        gpus_per_node: u32,
        a2a_global_gibs: f64,
        a2a_intra_gibs: f64,
        ar_global_gibs: f64,
        ar_cross_gibs: f64,
    ) -> Result<Self, TopologyError> {
        Self::new(
            num_nodes,
            gpus_per_node,
            a2a_global_gibs * GIB,
            a2a_intra_gibs * GIB,
            ar_global_gibs * GIB,
            ar_cross_gibs * GIB,
        )
    }

    /// 4 nodes of 8 A100s with measured NCCL bandwidths of 23 / 95 / 73 / 15 GiB/s.
    pub fn reference_cluster() -> Self {
        Self::from_gibs(4, 8, 23.0, 95.0, 73.0, 15.0).expect("reference cluster is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = toml::from_str(s)?;
        Self::try_from(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&TopologyFile::from(*self)).expect("topology serializes")
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_nodes
    }

    pub fn gpus_per_node(&self) -> u32 {
        self.gpus_per_node
    }

    /// Total GPU count `N * W`.
    pub fn total_gpus(&self) -> u32 {
        self.num_nodes * self.gpus_per_node
    }

    /// Global all-to-all bandwidth, bytes/second.
    pub fn a2a_global(&self) -> f64 {
        self.a2a_global
    }

    /// Intra-node all-to-all bandwidth, bytes/second.
    pub fn a2a_intra(&self) -> f64 {
        self.a2a_intra
    }

    /// Global all-reduce bandwidth, bytes/second.
    pub fn ar_global(&self) -> f64 {
        self.ar_global
    }

    /// Cross-node all-reduce bandwidth, bytes/second.
    pub fn ar_cross(&self) -> f64 {
        self.ar_cross
    }

    /// True when intra-node all-to-all is no faster than the global one, in
    /// which case the Flex tier can never save communication.
    pub fn is_homogeneous(&self) -> bool {
        self.a2a_intra <= self.a2a_global
    }

    /// Node index of a GPU under node-major numbering.
    pub fn node_of(&self, gpu: u32) -> u32 {
        gpu / self.gpus_per_node
    }

    /// Copy with every bandwidth multiplied by `factor`.
    pub fn scaled_bandwidths(&self, factor: f64) -> Result<Self, TopologyError> {
        Self::new(
            self.num_nodes,
            self.gpus_per_node,
            self.a2a_global * factor,
            self.a2a_intra * factor,
            self.ar_global * factor,
            self.ar_cross * factor,
        )
    }
}
