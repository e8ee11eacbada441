//! Per-row value-frequency distributions.
//!
//! A row's probability is its expected number of occurrences in one data
//! sample. Values above 1 are legal: a row may appear several times in the
//! same sequence, and only the expectation enters the cost model. The sum of
//! probabilities over any subset of rows is that subset's expected feature
//! length.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, CompensatedSum};

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("duplicate row_id {row_id} in table {table_id}")]
    DuplicateRow { table_id: u32, row_id: u64 },
    #[error("row_id {row_id} is out of range for table {table_id} with {num_rows} rows")]
    RowOutOfRange { table_id: u32, row_id: u64, num_rows: u64 },
    #[error("row references unknown table {0}")]
    UnknownTable(u32),
    #[error("num_samples must be at least 1")]
    ZeroSamples,
    #[error("table must have at least one row")]
    EmptyTable,
    #[error("invalid occurrence count {count} for row {row_id}")]
    InvalidCount { row_id: u64, count: f64 },
    #[error("invalid probability {probability} for row {row_id} of table {table_id}")]
    InvalidProbability { table_id: u32, row_id: u64, probability: f64 },
    #[error("invalid zipf parameter: {0}")]
    InvalidZipf(&'static str),
    #[error("table_id {0} appears in more than one distribution")]
    TableCollision(u32),
    #[error("histogram must hold exactly one table to be written, found {0}")]
    NotSingleTable(usize),
    #[error("malformed histogram: {0}")]
    Csv(#[from] csv::Error),
    #[error("histogram header must be `row_id,count`, found `{0}`")]
    BadHeader(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Identity of one embedding row across all tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub table_id: u32,
    pub row_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub table_id: u32,
    pub row_id: u64,
    /// Expected occurrences of this row per data sample.
    pub probability: f64,
}

impl RowRecord {
    pub fn key(&self) -> RowKey {
        RowKey { table_id: self.table_id, row_id: self.row_id }
    }
}

/// Per-table metadata. Zero-count rows are only counted here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableInfo {
    pub num_rows: u64,
    pub num_samples: u64,
}

/// Descending-probability order with a `(table_id, row_id)` tie-break.
fn row_order(a: &RowRecord, b: &RowRecord) -> Ordering {
    b.probability
        .total_cmp(&a.probability)
        .then(a.table_id.cmp(&b.table_id))
        .then(a.row_id.cmp(&b.row_id))
}

/// Sorted per-row probabilities for one or more tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDistribution {
    rows: Vec<RowRecord>,
    tables: BTreeMap<u32, TableInfo>,
}

impl RowDistribution {
    /// Builds a distribution from arbitrary records, validating them against
    /// `tables` and sorting.
    pub fn from_records(
        mut rows: Vec<RowRecord>,
        tables: BTreeMap<u32, TableInfo>,
    ) -> Result<Self, DistributionError> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            let info = tables.get(&r.table_id).ok_or(DistributionError::UnknownTable(r.table_id))?;
            if r.row_id >= info.num_rows {
                return Err(DistributionError::RowOutOfRange {
                    table_id: r.table_id,
                    row_id: r.row_id,
                    num_rows: info.num_rows,
                });
            }
            if r.probability < 0.0 || !r.probability.is_finite() {
                return Err(DistributionError::InvalidProbability {
                    table_id: r.table_id,
                    row_id: r.row_id,
                    probability: r.probability,
                });
            }
            if !seen.insert(r.key()) {
                return Err(DistributionError::DuplicateRow { table_id: r.table_id, row_id: r.row_id });
            }
        }
        for info in tables.values() {
            if info.num_samples == 0 {
                return Err(DistributionError::ZeroSamples);
            }
        }
        rows.retain(|r| r.probability > 0.0);
        rows.sort_unstable_by(row_order);
        Ok(Self { rows, tables })
    }

    /// One table from `(row_id, occurrence_count)` pairs.
    pub fn from_counts<I>(
        table_id: u32,
        num_rows: u64,
        num_samples: u64,
        counts: I,
    ) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = (u64, f64)>,
    {
        if num_samples == 0 {
            return Err(DistributionError::ZeroSamples);
        }
        let n = num_samples as f64;
        let mut rows = Vec::new();
        for (row_id, count) in counts {
            if count < 0.0 || !count.is_finite() {
                return Err(DistributionError::InvalidCount { row_id, count });
            }
            rows.push(RowRecord { table_id, row_id, probability: count / n });
        }
        let tables = BTreeMap::from([(table_id, TableInfo { num_rows, num_samples })]);
        Self::from_records(rows, tables)
    }

    /// Reads a `row_id,count` histogram.
    pub fn load_histogram<R: Read>(
        reader: R,
        table_id: u32,
        num_rows: u64,
        num_samples: u64,
    ) -> Result<Self, DistributionError> {
        if num_samples == 0 {
            return Err(DistributionError::ZeroSamples);
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "row_id" || &headers[1] != "count" {
            return Err(DistributionError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
        }
        let mut counts = Vec::new();
        for rec in rdr.deserialize::<(u64, f64)>() {
            counts.push(rec?);
        }
        Self::from_counts(table_id, num_rows, num_samples, counts)
    }

    pub fn load_histogram_path(
        path: impl AsRef<Path>,
        table_id: u32,
        num_rows: u64,
        num_samples: u64,
    ) -> Result<Self, DistributionError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|source| DistributionError::Io { path: path.display().to_string(), source })?;
        Self::load_histogram(std::io::BufReader::new(file), table_id, num_rows, num_samples)
    }

    /// Writes a single-table distribution as a `row_id,count` histogram in
    /// ascending row_id order. Counts are `probability * num_samples`.
    pub fn write_histogram<W: Write>(&self, writer: W) -> Result<(), DistributionError> {
        if self.tables.len() != 1 {
            return Err(DistributionError::NotSingleTable(self.tables.len()));
        }
        let n = self.tables.values().next().unwrap().num_samples as f64;
        let mut rows: Vec<&RowRecord> = self.rows.iter().collect();
        rows.sort_unstable_by_key(|r| r.row_id);
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row_id", "count"])?;
        for r in rows {
            let mut count = r.probability * n;
            let rounded = count.round();
            if n > 1.0 && (count - rounded).abs() <= 1e-9 * rounded.max(1.0) {
                count = rounded;
            }
            w.write_record([r.row_id.to_string(), format!("{count}")])?;
        }
        w.flush().map_err(|source| DistributionError::Io { path: "<histogram>".into(), source })?;
        Ok(())
    }

    pub fn write_histogram_path(&self, path: impl AsRef<Path>) -> Result<(), DistributionError> {
        let path = path.as_ref();
        let io_err = |source| DistributionError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_histogram(&mut buf)?;
        buf.flush().map_err(io_err)
    }

    /// Power-law table: the rank-k row has probability proportional to
    /// `k^-exponent`, scaled so the probabilities sum to `target_length`.
    ///
    /// `seed` only decides which row_id receives which rank. Probabilities
    /// are stored as counts over a single sample so the written histogram
    /// reloads bit-exactly.
    pub fn synthesize_zipf(
        table_id: u32,
        num_rows: u64,
        exponent: f64,
        target_length: f64,
        seed: u64,
    ) -> Result<Self, DistributionError> {
        if num_rows == 0 {
            return Err(DistributionError::EmptyTable);
        }
        if exponent < 0.0 || !exponent.is_finite() {
            return Err(DistributionError::InvalidZipf("exponent must be a finite value >= 0"));
        }
        if target_length <= 0.0 || !target_length.is_finite() {
            return Err(DistributionError::InvalidZipf("target length must be positive"));
        }
        let weights: Vec<f64> = (1..=num_rows).map(|k| (k as f64).powf(-exponent)).collect();
        let total = compensated_sum(weights.iter().copied());
        let scale = target_length / total;

        let mut ids: Vec<u64> = (0..num_rows).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);

        let rows = weights
            .iter()
            .zip(ids)
            .map(|(w, row_id)| RowRecord { table_id, row_id, probability: w * scale })
            .collect();
        let tables = BTreeMap::from([(table_id, TableInfo { num_rows, num_samples: 1 })]);
        Self::from_records(rows, tables)
    }

    /// Union of several distributions with disjoint table ids, re-sorted globally.
    pub fn merge<'a, I>(parts: I) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = &'a RowDistribution>,
    {
        let mut tables = BTreeMap::new();
        let mut rows = Vec::new();
        for part in parts {
            for (&id, &info) in &part.tables {
                if tables.insert(id, info).is_some() {
                    return Err(DistributionError::TableCollision(id));
                }
            }
            rows.extend_from_slice(&part.rows);
        }
        rows.sort_unstable_by(row_order);
        Ok(Self { rows, tables })
    }

    /// Rows with nonzero probability, sorted descending.
    pub fn rows(&self) -> &[RowRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn tables(&self) -> &BTreeMap<u32, TableInfo> {
        &self.tables
    }

    pub fn table_size(&self, table_id: u32) -> Option<u64> {
        self.tables.get(&table_id).map(|t| t.num_rows)
    }

    /// Sum of `E` over all tables, including rows never observed.
    pub fn total_table_rows(&self) -> u64 {
        self.tables.values().map(|t| t.num_rows).sum()
    }

    pub fn is_sorted(&self) -> bool {
        self.rows.windows(2).all(|w| row_order(&w[0], &w[1]) != Ordering::Greater)
    }

    /// Expected number of occurrences per sample over rows `range` of the sorted order.
    pub fn expected_length(&self, range: Range<usize>) -> f64 {
        compensated_sum(self.rows[range].iter().map(|r| r.probability))
    }

    pub fn expected_length_where<F: Fn(&RowRecord) -> bool>(&self, pred: F) -> f64 {
        compensated_sum(self.rows.iter().filter(|r| pred(r)).map(|r| r.probability))
    }

    /// `L` of the whole distribution.
    pub fn total_expected_length(&self) -> f64 {
        self.expected_length(0..self.rows.len())
    }

    /// `L` of a single table.
    pub fn table_expected_length(&self, table_id: u32) -> f64 {
        self.expected_length_where(|r| r.table_id == table_id)
    }

    /// Per-table expected lengths, keyed by table id.
    pub fn table_expected_lengths(&self) -> BTreeMap<u32, f64> {
        let mut acc: BTreeMap<u32, CompensatedSum> =
            self.tables.keys().map(|&t| (t, CompensatedSum::new())).collect();
        for r in &self.rows {
            acc.get_mut(&r.table_id).expect("row table is registered").add(r.probability);
        }
        acc.into_iter().map(|(t, s)| (t, s.value())).collect()
    }
}
