use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rowshard_core::{CostModelConfig, PlanGoal, RowDistribution, Topology};
use serde::{Deserialize, Serialize};

/// What `plan` should produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    Plan(PlanGoal),
    Frontier,
}

impl FromStr for Goal {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "2tier" => Goal::Plan(PlanGoal::TwoTier),
            "3tier" => Goal::Plan(PlanGoal::ThreeTier),
            "frontier" => Goal::Frontier,
            other => match other.strip_prefix("budget:") {
                Some(bytes) => {
                    let b: f64 = bytes.trim().parse().with_context(|| format!("bad budget `{bytes}`"))?;
                    if !b.is_finite() {
                        bail!("budget must be a finite number of bytes, got `{bytes}`");
                    }
                    Goal::Plan(PlanGoal::Budget { memory_budget_bytes: b, allow_flex: false })
                }
                None => bail!("unknown goal `{other}` (expected 2tier, 3tier, budget:<bytes> or frontier)"),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipfSpec {
    pub exponent: f64,
    pub expected_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub table_id: u32,
    pub num_rows: u64,
    /// Samples the histogram counts were collected over.
    #[serde(default = "one")]
    pub num_samples: u64,
    pub histogram: Option<PathBuf>,
    pub zipf: Option<ZipfSpec>,
}

fn one() -> u64 {
    1
}

fn default_iterations() -> u32 {
    200
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_iterations")]
    pub iterations: u32,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self { iterations: default_iterations() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub topology: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub hash_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub goal: String,
    /// Lets budgeted plans use the Flex tier.
    #[serde(default)]
    pub allow_flex: bool,
    #[serde(default)]
    pub simulation: SimulationSpec,
    pub cost_model: CostModelConfig,
    #[serde(default)]
    pub tables: Vec<TableSpec>,
}

/// A parsed manifest with every path resolved against its directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub manifest: Manifest,
    pub base: PathBuf,
    pub output_dir: PathBuf,
}

impl Loaded {
    pub fn from_path(path: &Path, out_override: Option<&Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: Manifest =
            toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let output_dir = match out_override {
            Some(out) => out.to_path_buf(),
            None => base.join(&manifest.output_dir),
        };
        let loaded = Self { manifest, base, output_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.tables.is_empty() {
            bail!("empty manifest: no [[tables]] entries");
        }
        let mut ids = BTreeSet::new();
        for t in &m.tables {
            if !ids.insert(t.table_id) {
                bail!("table_id {} appears more than once", t.table_id);
            }
            if t.histogram.is_none() && t.zipf.is_none() {
                bail!("table {} needs a histogram path or a zipf spec", t.table_id);
            }
        }
        m.cost_model.validate()?;
        self.goal()?;
        Ok(())
    }

    pub fn goal(&self) -> Result<Goal> {
        let goal: Goal = self.manifest.goal.parse()?;
        Ok(match goal {
            Goal::Plan(PlanGoal::Budget { memory_budget_bytes, .. }) => Goal::Plan(PlanGoal::Budget {
                memory_budget_bytes,
                allow_flex: self.manifest.allow_flex,
            }),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn topology(&self) -> Result<Topology> {
        let path = self.resolve(&self.manifest.topology);
        Topology::from_path(&path).with_context(|| format!("topology {}", path.display()))
    }

    pub fn cost_model(&self) -> CostModelConfig {
        self.manifest.cost_model
    }

    /// Where `synth` writes a table's histogram.
    pub fn histogram_path(&self, t: &TableSpec) -> PathBuf {
        match &t.histogram {
            Some(p) => self.resolve(p),
            None => self.output_dir.join(format!("table_{}.csv", t.table_id)),
        }
    }

    pub fn synthesize(&self, t: &TableSpec) -> Result<RowDistribution> {
        let z = t.zipf.as_ref().with_context(|| format!("table {} has no zipf spec", t.table_id))?;
        let seed = self.manifest.seed ^ u64::from(t.table_id).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        RowDistribution::synthesize_zipf(t.table_id, t.num_rows, z.exponent, z.expected_length, seed)
            .with_context(|| format!("table {}", t.table_id))
    }

    /// One table: its histogram when the file exists, else its zipf spec.
    pub fn load_table(&self, t: &TableSpec) -> Result<RowDistribution> {
        let path = self.histogram_path(t);
        if path.exists() {
            return RowDistribution::load_histogram_path(&path, t.table_id, t.num_rows, t.num_samples)
                .with_context(|| format!("histogram {}", path.display()));
        }
        match (&t.histogram, &t.zipf) {
            (_, Some(_)) => self.synthesize(t),
            (Some(_), None) => bail!("histogram {} not found", path.display()),
            (None, None) => unreachable!("validated"),
        }
    }

    /// All tables merged into one sorted distribution.
    pub fn distribution(&self) -> Result<RowDistribution> {
        let parts = self.manifest.tables.iter().map(|t| self.load_table(t)).collect::<Result<Vec<_>>>()?;
        Ok(RowDistribution::merge(&parts)?)
    }
}
