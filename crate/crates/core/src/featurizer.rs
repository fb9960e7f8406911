//! Query featurization.
//!
//! A query becomes three sets of fixed-width vectors:
//!
//! * table elements: `one_hot(table) ‖ sample feature`, where the sample
//!   feature is empty, the qualifying fraction `s / S`, or the `S`-bit
//!   sample bitmap depending on [`SampleMode`];
//! * join elements: `one_hot(fk edge)`;
//! * predicate elements: `one_hot(column) ‖ one_hot(op) ‖ normalized literal`.
//!
//! Empty join or predicate sets are represented by one all-zero element so
//! that the set average is always defined.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::executor::{Bitmap, LabeledQuery};
use crate::query::{CmpOp, QuerySpec};
use crate::storage::{Database, Value};
use crate::{Error, Result};

pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    None,
    Count,
    Bitmap,
}

impl SampleMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(SampleMode::None),
            "count" => Some(SampleMode::Count),
            "bitmap" => Some(SampleMode::Bitmap),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SampleMode::None => "none",
            SampleMode::Count => "count",
            SampleMode::Bitmap => "bitmap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: Value,
    pub max: Value,
}

/// Counts labels that fell outside the training range and were clamped.
#[derive(Debug, Default)]
pub struct ClampCounter(AtomicU64);

impl ClampCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for ClampCounter {
    fn clone(&self) -> Self {
        ClampCounter(AtomicU64::new(self.get()))
    }
}

impl PartialEq for ClampCounter {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Everything needed to featurize queries deterministically. Frozen once
/// built; serialized into model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingCatalog {
    pub version: u32,
    pub table_index: BTreeMap<String, usize>,
    pub join_index: BTreeMap<String, usize>,
    pub column_index: BTreeMap<String, usize>,
    pub op_index: BTreeMap<String, usize>,
    pub column_ranges: BTreeMap<String, ValueRange>,
    pub sample_size: usize,
    pub sample_mode: SampleMode,
    pub label_log_min: f64,
    pub label_log_max: f64,
    #[serde(skip)]
    clamped_labels: ClampCounter,
}

pub fn build_catalog(
    db: &Database,
    training_labels: &[u64],
    sample_size: usize,
    sample_mode: SampleMode,
) -> Result<EncodingCatalog> {
    let min = training_labels
        .iter()
        .copied()
        .min()
        .ok_or_else(|| Error::InvalidArgument("no training labels".into()))?;
    let max = training_labels.iter().copied().max().unwrap();
    if min == 0 {
        return Err(Error::InvalidArgument("training labels must be >= 1".into()));
    }
    if min == max {
        return Err(Error::InvalidArgument(format!(
            "degenerate label range: every training label is {min}"
        )));
    }
    if sample_mode != SampleMode::None && sample_size == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }

    let table_index = db
        .table_names()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i))
        .collect();
    let join_index = db
        .fk_edges()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.to_string(), i))
        .collect();
    let mut columns = Vec::new();
    let mut column_ranges = BTreeMap::new();
    for t in db.tables() {
        for c in t.attribute_columns() {
            let name = format!("{}.{}", t.name(), c.name);
            let range = db
                .stats(t.name(), &c.name)
                .map_or(ValueRange { min: 0, max: 0 }, |s| ValueRange { min: s.min, max: s.max });
            column_ranges.insert(name.clone(), range);
            columns.push(name);
        }
    }
    columns.sort();
    let column_index = columns.into_iter().enumerate().map(|(i, c)| (c, i)).collect();
    let op_index = CmpOp::ALL
        .iter()
        .map(|op| (op.symbol().to_string(), op.index()))
        .collect();

    Ok(EncodingCatalog {
        version: CATALOG_VERSION,
        table_index,
        join_index,
        column_index,
        op_index,
        column_ranges,
        sample_size,
        sample_mode,
        label_log_min: (min as f64).ln(),
        label_log_max: (max as f64).ln(),
        clamped_labels: ClampCounter::default(),
    })
}

impl EncodingCatalog {
    pub fn sample_width(&self) -> usize {
        match self.sample_mode {
            SampleMode::None => 0,
            SampleMode::Count => 1,
            SampleMode::Bitmap => self.sample_size,
        }
    }

    pub fn table_width(&self) -> usize {
        self.table_index.len() + self.sample_width()
    }

    pub fn join_width(&self) -> usize {
        self.join_index.len()
    }

    pub fn predicate_width(&self) -> usize {
        self.column_index.len() + CmpOp::ALL.len() + 1
    }

    /// `ln(c_max) - ln(c_min)` over the training labels.
    pub fn log_span(&self) -> f64 {
        self.label_log_max - self.label_log_min
    }

    pub fn min_label(&self) -> f64 {
        self.label_log_min.exp()
    }

    pub fn max_label(&self) -> f64 {
        self.label_log_max.exp()
    }

    /// Maps `c` to `(ln c - ln c_min) / (ln c_max - ln c_min)`, clamping
    /// out-of-range labels into `[0, 1]`.
    pub fn normalize_label(&self, c: u64) -> Result<f64> {
        if c == 0 {
            return Err(Error::InvalidArgument("cardinality must be >= 1".into()));
        }
        let y = ((c as f64).ln() - self.label_log_min) / self.log_span();
        if !(0.0..=1.0).contains(&y) {
            self.clamped_labels.0.fetch_add(1, Ordering::Relaxed);
        }
        Ok(y.clamp(0.0, 1.0))
    }

    pub fn denormalize_label(&self, y: f64) -> f64 {
        (y * self.log_span() + self.label_log_min).exp()
    }

    /// Number of labels clamped by [`normalize_label`](Self::normalize_label).
    pub fn clamped_label_count(&self) -> u64 {
        self.clamped_labels.get()
    }

    pub fn to_json(&self) -> Result<String> {
        // Value maps are ordered, so keys come out sorted
        Ok(serde_json::to_string(&serde_json::to_value(self)?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let catalog: EncodingCatalog = serde_json::from_str(text)?;
        if catalog.version != CATALOG_VERSION {
            return Err(Error::Encoding(format!(
                "catalog version {} unsupported (expected {CATALOG_VERSION})",
                catalog.version
            )));
        }
        Ok(catalog)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedQuery {
    pub tables: Vec<Vec<f64>>,
    pub joins: Vec<Vec<f64>>,
    pub predicates: Vec<Vec<f64>>,
    pub label: Option<f64>,
}

pub fn featurize(q: &LabeledQuery, catalog: &EncodingCatalog) -> Result<FeaturizedQuery> {
    featurize_spec(&q.spec, &q.bitmaps, Some(q.true_cardinality), catalog)
}

/// Featurizes a query given its per-alias bitmaps (ignored when the catalog
/// uses no sample features).
pub fn featurize_spec(
    spec: &QuerySpec,
    bitmaps: &BTreeMap<String, Bitmap>,
    label: Option<u64>,
    catalog: &EncodingCatalog,
) -> Result<FeaturizedQuery> {
    let n_tables = catalog.table_index.len();
    let mut tables = Vec::with_capacity(spec.tables.len());
    for t in &spec.tables {
        let pos = *catalog
            .table_index
            .get(&t.table)
            .ok_or_else(|| Error::Encoding(format!("table {} not in catalog", t.table)))?;
        let mut v = vec![0.0; catalog.table_width()];
        v[pos] = 1.0;
        if catalog.sample_mode != SampleMode::None {
            let bitmap = bitmaps
                .get(&t.alias)
                .ok_or_else(|| Error::MissingSample(format!("no bitmap for alias {}", t.alias)))?;
            if bitmap.len() != catalog.sample_size {
                return Err(Error::Encoding(format!(
                    "bitmap for {} has {} bits, catalog expects {}",
                    t.alias,
                    bitmap.len(),
                    catalog.sample_size
                )));
            }
            match catalog.sample_mode {
                SampleMode::Count => {
                    v[n_tables] = bitmap.count_ones() as f64 / catalog.sample_size as f64;
                }
                SampleMode::Bitmap => {
                    for i in 0..catalog.sample_size {
                        if bitmap.get(i) {
                            v[n_tables + i] = 1.0;
                        }
                    }
                }
                SampleMode::None => unreachable!(),
            }
        }
        tables.push(v);
    }

    let mut joins = Vec::with_capacity(spec.joins.len().max(1));
    for j in &spec.joins {
        let lt = spec.table_of(&j.left.alias).unwrap_or_default();
        let rt = spec.table_of(&j.right.alias).unwrap_or_default();
        let key = format!("{lt}.{}={rt}.{}", j.left.column, j.right.column);
        let pos = *catalog
            .join_index
            .get(&key)
            .ok_or_else(|| Error::Encoding(format!("join {key} not in catalog")))?;
        let mut v = vec![0.0; catalog.join_width()];
        v[pos] = 1.0;
        joins.push(v);
    }
    if joins.is_empty() {
        joins.push(vec![0.0; catalog.join_width()]);
    }

    let n_cols = catalog.column_index.len();
    let mut predicates = Vec::with_capacity(spec.predicates.len().max(1));
    for p in &spec.predicates {
        let table = spec.table_of(&p.column.alias).unwrap_or_default();
        let key = format!("{table}.{}", p.column.column);
        let pos = *catalog
            .column_index
            .get(&key)
            .ok_or_else(|| Error::Encoding(format!("column {key} not in catalog")))?;
        let range = catalog.column_ranges[&key];
        let mut v = vec![0.0; catalog.predicate_width()];
        v[pos] = 1.0;
        v[n_cols + p.op.index()] = 1.0;
        v[n_cols + CmpOp::ALL.len()] = normalize_literal(p.literal, range);
        predicates.push(v);
    }
    if predicates.is_empty() {
        predicates.push(vec![0.0; catalog.predicate_width()]);
    }

    let label = label.map(|c| catalog.normalize_label(c)).transpose()?;
    Ok(FeaturizedQuery {
        tables,
        joins,
        predicates,
        label,
    })
}

fn normalize_literal(v: Value, range: ValueRange) -> f64 {
    if range.max == range.min {
        return 0.0;
    }
    ((v - range.min) as f64 / (range.max - range.min) as f64).clamp(0.0, 1.0)
}

/// One set of a batch: `data` is `(batch, max_len, width)` row-major and
/// `mask` is `(batch, max_len)` with 1 for real elements.
#[derive(Debug, Clone, PartialEq)]
pub struct SetBatch {
    pub batch: usize,
    pub max_len: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub mask: Vec<f64>,
}

impl SetBatch {
    fn pack(sets: &[&[Vec<f64>]], width: usize) -> Result<Self> {
        let batch = sets.len();
        let max_len = sets.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut data = vec![0.0; batch * max_len * width];
        let mut mask = vec![0.0; batch * max_len];
        for (b, set) in sets.iter().enumerate() {
            for (i, elem) in set.iter().enumerate() {
                if elem.len() != width {
                    return Err(Error::Dimension(format!(
                        "set element has width {}, expected {width}",
                        elem.len()
                    )));
                }
                let off = (b * max_len + i) * width;
                data[off..off + width].copy_from_slice(elem);
                mask[b * max_len + i] = 1.0;
            }
        }
        Ok(SetBatch {
            batch,
            max_len,
            width,
            data,
            mask,
        })
    }

    pub fn element(&self, b: usize, i: usize) -> &[f64] {
        let off = (b * self.max_len + i) * self.width;
        &self.data[off..off + self.width]
    }

    pub fn is_real(&self, b: usize, i: usize) -> bool {
        self.mask[b * self.max_len + i] != 0.0
    }

    /// Appends `extra` all-zero, masked-out elements to every query.
    pub fn padded(&self, extra: usize) -> SetBatch {
        let max_len = self.max_len + extra;
        let mut data = vec![0.0; self.batch * max_len * self.width];
        let mut mask = vec![0.0; self.batch * max_len];
        for b in 0..self.batch {
            for i in 0..self.max_len {
                let src = (b * self.max_len + i) * self.width;
                let dst = (b * max_len + i) * self.width;
                data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
                mask[b * max_len + i] = self.mask[b * self.max_len + i];
            }
        }
        SetBatch {
            batch: self.batch,
            max_len,
            width: self.width,
            data,
            mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedBatch {
    pub tables: SetBatch,
    pub joins: SetBatch,
    pub predicates: SetBatch,
    /// normalized labels, present only if every query carried one
    pub labels: Option<Vec<f64>>,
}

impl FeaturizedBatch {
    pub fn len(&self) -> usize {
        self.tables.batch
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Zero-pads every set to the longest one in the batch.
pub fn batch(queries: &[&FeaturizedQuery]) -> Result<FeaturizedBatch> {
    let first = queries
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let width_of = |sets: &[Vec<f64>]| sets.first().map_or(0, Vec::len);
    let tables: Vec<&[Vec<f64>]> = queries.iter().map(|q| q.tables.as_slice()).collect();
    let joins: Vec<&[Vec<f64>]> = queries.iter().map(|q| q.joins.as_slice()).collect();
    let preds: Vec<&[Vec<f64>]> = queries.iter().map(|q| q.predicates.as_slice()).collect();
    let labels = queries.iter().map(|q| q.label).collect::<Option<Vec<f64>>>();
    Ok(FeaturizedBatch {
        tables: SetBatch::pack(&tables, width_of(&first.tables))?,
        joins: SetBatch::pack(&joins, width_of(&first.joins))?,
        predicates: SetBatch::pack(&preds, width_of(&first.predicates))?,
        labels,
    })
}
