//! Ground truth: exact result cardinalities and sample bitmaps.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::query::{format_query, read_workload, Predicate, QuerySpec};
use crate::storage::{ColumnStats, Database, MaterializedSample, SampleSet, Table, Value};
use crate::{Error, Result};

/// Fixed-length bit vector. Bit `i` lives in byte `i / 8` at bit position
/// `i % 8`, so the hex form reads sample row 0 from the low bit of the first
/// byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    len: usize,
    bytes: Vec<u8>,
}

impl Bitmap {
    pub fn zeros(len: usize) -> Self {
        Bitmap {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Bitmap::zeros(len);
        for i in 0..len {
            b.set(i);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.bytes[i / 8] |= 1 << (i % 8);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.bytes[i / 8] & (1 << (i % 8)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Parse(format!("bad bitmap hex: {e}")))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Parse(format!(
                "bitmap has {} bytes, expected {} for {len} bits",
                bytes.len(),
                len.div_ceil(8)
            )));
        }
        let b = Bitmap { len, bytes };
        if (len..b.bytes.len() * 8).any(|i| b.bytes[i / 8] & (1 << (i % 8)) != 0) {
            return Err(Error::Parse("bitmap has bits set past its length".into()));
        }
        Ok(b)
    }
}

/// A query with its exact cardinality and one sample bitmap per alias.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub spec: QuerySpec,
    pub true_cardinality: u64,
    pub bitmaps: BTreeMap<String, Bitmap>,
}

impl LabeledQuery {
    /// True when some table carrying predicates has no qualifying sample row.
    pub fn is_zero_tuple(&self) -> bool {
        self.spec.tables.iter().any(|t| {
            self.spec.predicates_on(&t.alias).next().is_some()
                && self.bitmaps.get(&t.alias).is_some_and(|b| b.count_ones() == 0)
        })
    }
}

fn column_values<'a>(table: &'a Table, column: &str) -> Result<&'a [Value]> {
    table
        .column(column)
        .map(|c| c.values.as_slice())
        .ok_or_else(|| Error::Schema(format!("unknown column {}.{column}", table.name())))
}

/// Rows of `table` satisfying every predicate.
pub fn filter_rows(table: &Table, predicates: &[&Predicate]) -> Result<Vec<usize>> {
    let cols = predicates
        .iter()
        .map(|p| column_values(table, &p.column.column))
        .collect::<Result<Vec<_>>>()?;
    let Some((first, rest)) = predicates.split_first() else {
        return Ok((0..table.row_count()).collect());
    };
    let mut rows: Vec<usize> = (0..table.row_count())
        .filter(|&r| first.op.eval(cols[0][r], first.literal))
        .collect();
    for (p, c) in rest.iter().zip(&cols[1..]) {
        rows.retain(|&r| p.op.eval(c[r], p.literal));
    }
    Ok(rows)
}

/// Exact bag-semantics result size of the join + filter query.
pub fn true_cardinality(db: &Database, spec: &QuerySpec) -> Result<u64> {
    let root = spec
        .tables
        .iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("query has no tables".into()))?;
    true_cardinality_rooted(db, spec, &root.alias)
}

/// Same as [`true_cardinality`] with an explicit root for the join tree.
///
/// Each base table is filtered, then the join tree is folded bottom-up:
/// every subtree is hash-aggregated into `join key -> number of matching
/// subtree tuples` and probed by its parent. The root sums its row weights.
pub fn true_cardinality_rooted(db: &Database, spec: &QuerySpec, root: &str) -> Result<u64> {
    let adj = spec.adjacency();
    if !adj.contains_key(root) {
        return Err(Error::InvalidArgument(format!("unknown root alias {root}")));
    }
    let weights = subtree_weights(db, spec, &adj, root, None)?;
    let total: u128 = weights.iter().map(|(_, w)| *w).sum();
    Ok(u64::try_from(total).unwrap_or(u64::MAX))
}

type Adjacency<'a> = BTreeMap<&'a str, Vec<(&'a str, &'a str, &'a str)>>;

fn subtree_weights(
    db: &Database,
    spec: &QuerySpec,
    adj: &Adjacency<'_>,
    alias: &str,
    parent: Option<&str>,
) -> Result<Vec<(usize, u128)>> {
    let table_name = spec
        .table_of(alias)
        .ok_or_else(|| Error::InvalidArgument(format!("undeclared alias {alias}")))?;
    let table = db
        .table(table_name)
        .ok_or_else(|| Error::Schema(format!("unknown table {table_name}")))?;
    let preds: Vec<&Predicate> = spec.predicates_on(alias).collect();
    let mut rows: Vec<(usize, u128)> = filter_rows(table, &preds)?.into_iter().map(|r| (r, 1)).collect();

    for &(child, own_col, child_col) in &adj[alias] {
        if Some(child) == parent {
            continue;
        }
        let child_rows = subtree_weights(db, spec, adj, child, Some(alias))?;
        let child_table = db.table(spec.table_of(child).unwrap()).unwrap();
        let child_keys = column_values(child_table, child_col)?;
        let agg = KeyWeights::build(db.stats(child_table.name(), child_col), &child_rows, child_keys);
        let own_keys = column_values(table, own_col)?;
        rows.retain_mut(|(r, w)| match agg.get(own_keys[*r]) {
            0 => false,
            m => {
                *w = w.saturating_mul(m);
                true
            }
        });
    }
    Ok(rows)
}

/// Join key -> summed subtree weight. Keys with a compact value range get a
/// flat array instead of a hash map.
enum KeyWeights {
    Dense { min: Value, weights: Vec<u128> },
    Sparse(HashMap<Value, u128>),
}

impl KeyWeights {
    fn build(stats: Option<&ColumnStats>, rows: &[(usize, u128)], keys: &[Value]) -> Self {
        if let Some(st) = stats {
            let span = st.max.abs_diff(st.min);
            if span < (4 * keys.len() as u64).max(1024) {
                let mut weights = vec![0u128; span as usize + 1];
                for &(r, w) in rows {
                    let slot = &mut weights[(keys[r] - st.min) as usize];
                    *slot = slot.saturating_add(w);
                }
                return KeyWeights::Dense { min: st.min, weights };
            }
        }
        let mut agg: HashMap<Value, u128> = HashMap::with_capacity(rows.len());
        for &(r, w) in rows {
            let slot = agg.entry(keys[r]).or_insert(0);
            *slot = slot.saturating_add(w);
        }
        KeyWeights::Sparse(agg)
    }

    fn get(&self, key: Value) -> u128 {
        match self {
            KeyWeights::Dense { min, weights } => {
                if key < *min {
                    return 0;
                }
                usize::try_from(key - min)
                    .ok()
                    .and_then(|i| weights.get(i))
                    .copied()
                    .unwrap_or(0)
            }
            KeyWeights::Sparse(m) => m.get(&key).copied().unwrap_or(0),
        }
    }
}

/// Bit `i` is set iff sample row `i` satisfies every predicate. No
/// predicates yields an all-ones bitmap.
pub fn eval_predicates_on_sample(sample: &MaterializedSample, predicates: &[&Predicate]) -> Result<Bitmap> {
    let cols = predicates
        .iter()
        .map(|p| {
            sample
                .column(&p.column.column)
                .ok_or_else(|| Error::Schema(format!("unknown column {}.{}", sample.table, p.column.column)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bitmap = Bitmap::zeros(sample.size());
    for i in 0..sample.size() {
        if predicates
            .iter()
            .zip(&cols)
            .all(|(p, c)| p.op.eval(c[i], p.literal))
        {
            bitmap.set(i);
        }
    }
    Ok(bitmap)
}

/// Bitmaps for every alias of the query; joins play no part.
pub fn sample_bitmaps(spec: &QuerySpec, samples: &SampleSet) -> Result<BTreeMap<String, Bitmap>> {
    spec.tables
        .iter()
        .map(|t| {
            let sample = samples.get(&t.table)?;
            let preds: Vec<&Predicate> = spec.predicates_on(&t.alias).collect();
            Ok((t.alias.clone(), eval_predicates_on_sample(sample, &preds)?))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub queries: Vec<LabeledQuery>,
    /// queries dropped because their result is empty
    pub dropped_empty: usize,
}

pub fn label_query(db: &Database, spec: &QuerySpec, samples: &SampleSet) -> Result<LabeledQuery> {
    Ok(LabeledQuery {
        spec: spec.clone(),
        true_cardinality: true_cardinality(db, spec)?,
        bitmaps: sample_bitmaps(spec, samples)?,
    })
}

/// Labels every query, dropping empty results. `threads > 1` executes
/// queries on a worker pool; output order always follows the input.
pub fn label_workload(
    db: &Database,
    specs: &[QuerySpec],
    samples: &SampleSet,
    threads: usize,
) -> Result<LabelOutcome> {
    let labeled: Vec<LabeledQuery> = if threads <= 1 {
        specs
            .iter()
            .map(|q| label_query(db, q, samples))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| {
            specs
                .par_iter()
                .map(|q| label_query(db, q, samples))
                .collect::<Result<_>>()
        })?
    };
    let before = labeled.len();
    let queries: Vec<LabeledQuery> = labeled
        .into_iter()
        .filter(|q| q.true_cardinality > 0)
        .collect();
    Ok(LabelOutcome {
        dropped_empty: before - queries.len(),
        queries,
    })
}

pub fn bitmap_sidecar(corpus: &Path) -> PathBuf {
    let mut s = corpus.as_os_str().to_owned();
    s.push(".bitmaps");
    PathBuf::from(s)
}

/// Writes the labeled workload and its `<path>.bitmaps` sidecar. The sidecar
/// starts with a `-- sample_size=N` line; every further line holds
/// comma-separated `alias:hex` entries (alias order) for the query on the
/// same line of the corpus.
pub fn write_labeled_corpus(path: impl AsRef<Path>, queries: &[LabeledQuery]) -> Result<()> {
    let path = path.as_ref();
    let sidecar = bitmap_sidecar(path);
    let sample_size = queries
        .iter()
        .flat_map(|q| q.bitmaps.values())
        .map(Bitmap::len)
        .next()
        .unwrap_or(0);
    let mut main = String::new();
    let mut side = format!("{SIDECAR_HEADER}{sample_size}\n");
    for q in queries {
        main.push_str(&format_query(&q.spec, Some(q.true_cardinality)));
        main.push('\n');
        let entries: Vec<String> = q
            .bitmaps
            .iter()
            .map(|(a, b)| format!("{a}:{}", b.to_hex()))
            .collect();
        side.push_str(&entries.join(","));
        side.push('\n');
    }
    fs::write(path, main).map_err(|e| Error::io(path, e))?;
    let mut f = fs::File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    f.write_all(side.as_bytes()).map_err(|e| Error::io(&sidecar, e))
}

const SIDECAR_HEADER: &str = "-- sample_size=";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub queries: Vec<LabeledQuery>,
    pub sample_size: usize,
}

pub fn read_labeled_corpus(path: impl AsRef<Path>, db: &Database) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let sidecar = bitmap_sidecar(path);
    let workload = read_workload(path, db)?;
    let side = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let mut sample_size = None;
    let mut lines = Vec::new();
    for line in side.lines() {
        if let Some(rest) = line.strip_prefix(SIDECAR_HEADER) {
            sample_size = Some(rest.trim().parse::<usize>().map_err(|_| {
                Error::Parse(format!("{}: bad sample size {rest:?}", sidecar.display()))
            })?);
        } else if !line.starts_with("--") {
            lines.push(line);
        }
    }
    let sample_size = sample_size.ok_or_else(|| {
        Error::Parse(format!("{}: missing '{SIDECAR_HEADER}N' header", sidecar.display()))
    })?;
    if lines.len() != workload.len() {
        return Err(Error::Parse(format!(
            "{} has {} bitmap lines but the corpus has {} queries",
            sidecar.display(),
            lines.len(),
            workload.len()
        )));
    }
    let queries = workload
        .into_iter()
        .zip(lines)
        .enumerate()
        .map(|(i, ((spec, label), line))| {
            let true_cardinality = label.ok_or_else(|| {
                Error::Parse(format!("{}: query {} has no cardinality", path.display(), i + 1))
            })?;
            let mut bitmaps = BTreeMap::new();
            for entry in line.split(',').filter(|e| !e.is_empty()) {
                let (alias, hex) = entry.split_once(':').ok_or_else(|| {
                    Error::Parse(format!("{}: query {}: bad entry {entry:?}", sidecar.display(), i + 1))
                })?;
                bitmaps.insert(alias.to_string(), Bitmap::from_hex(hex, sample_size)?);
            }
            if spec.tables.iter().any(|t| !bitmaps.contains_key(&t.alias)) {
                return Err(Error::Parse(format!(
                    "{}: query {}: missing bitmap",
                    sidecar.display(),
                    i + 1
                )));
            }
            Ok(LabeledQuery {
                spec,
                true_cardinality,
                bitmaps,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LabeledCorpus { queries, sample_size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{parse_query, CmpOp, ColumnRef};
    use crate::storage::{generate_synthetic_db, Column, ColumnKind, SynthConfig};

    fn ab_db() -> Database {
        let a = Table::new(
            "a",
            vec![
                Column::new("id", ColumnKind::PrimaryKey, vec![1, 2]),
                Column::new("x", ColumnKind::Attribute, vec![5, 11]),
            ],
        )
        .unwrap();
        let b = Table::new(
            "b",
            vec![
                Column::new("id", ColumnKind::PrimaryKey, vec![1, 2, 3]),
                Column::new(
                    "a_id",
                    ColumnKind::ForeignKey {
                        table: "a".into(),
                        column: "id".into(),
                    },
                    vec![1, 1, 2],
                ),
                Column::new("y", ColumnKind::Attribute, vec![5, 11, 12]),
            ],
        )
        .unwrap();
        Database::new(vec![a, b]).unwrap()
    }

    #[test]
    fn hand_counted_cardinalities() {
        let db = ab_db();
        let (q, _) = parse_query("a a,b b#b.a_id=a.id##", &db).unwrap();
        assert_eq!(true_cardinality(&db, &q).unwrap(), 3);
        assert_eq!(true_cardinality_rooted(&db, &q, "b").unwrap(), 3);
        let (q, _) = parse_query("b b##b.y,>,10#", &db).unwrap();
        assert_eq!(true_cardinality(&db, &q).unwrap(), 2);
        let (q, _) = parse_query("a a,b b#b.a_id=a.id#a.x,>,10#", &db).unwrap();
        assert_eq!(true_cardinality(&db, &q).unwrap(), 1);
        let (q, _) = parse_query("a a,b b#b.a_id=a.id#a.x,=,7#", &db).unwrap();
        assert_eq!(true_cardinality(&db, &q).unwrap(), 0);
    }

    #[test]
    fn sample_bitmaps_follow_predicates() {
        let db = ab_db();
        let samples = SampleSet::full(&db).unwrap();
        let b = samples.get("b").unwrap();
        assert_eq!(eval_predicates_on_sample(b, &[]).unwrap(), Bitmap::ones(3));
        let p = Predicate::new(ColumnRef::new("b", "y"), CmpOp::Eq, 99);
        assert_eq!(eval_predicates_on_sample(b, &[&p]).unwrap().count_ones(), 0);
        let p = Predicate::new(ColumnRef::new("b", "y"), CmpOp::Gt, 10);
        let bm = eval_predicates_on_sample(b, &[&p]).unwrap();
        assert_eq!((bm.get(0), bm.get(1), bm.get(2)), (false, true, true));
    }

    #[test]
    fn bitmap_hex_is_little_endian_within_bytes() {
        let mut b = Bitmap::zeros(10);
        b.set(0);
        b.set(9);
        assert_eq!(b.to_hex(), "0102");
        assert_eq!(Bitmap::from_hex("0102", 10).unwrap(), b);
        assert!(Bitmap::from_hex("0104", 10).is_err());
        assert!(Bitmap::from_hex("01", 10).is_err());
    }

    #[test]
    fn labeling_drops_empty_results() {
        let db = ab_db();
        let samples = SampleSet::full(&db).unwrap();
        let specs: Vec<QuerySpec> = ["a a,b b#b.a_id=a.id##", "b b##b.y,=,4#", "b b##b.y,<,12#"]
            .iter()
            .map(|l| parse_query(l, &db).unwrap().0)
            .collect();
        let out = label_workload(&db, &specs, &samples, 1).unwrap();
        assert_eq!(out.dropped_empty, 1);
        assert_eq!(out.queries.len(), 2);
        for q in &out.queries {
            assert_eq!(q.true_cardinality, true_cardinality(&db, &q.spec).unwrap());
        }
        let par = label_workload(&db, &specs, &samples, 3).unwrap();
        assert_eq!(par.queries, out.queries);
    }

    #[test]
    fn corpus_round_trip() {
        let db = generate_synthetic_db(&SynthConfig::small(200, 300), 5).unwrap();
        let samples = SampleSet::draw(&db, 20, 1).unwrap();
        let specs = crate::query::generate_workload(&db, 50, 2, 3).unwrap();
        let labeled = label_workload(&db, &specs, &samples, 1).unwrap().queries;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        write_labeled_corpus(&path, &labeled).unwrap();
        let back = read_labeled_corpus(&path, &db).unwrap();
        assert_eq!(back.sample_size, 20);
        assert_eq!(back.queries, labeled);
    }

    #[test]
    fn zero_tuple_detection() {
        let db = ab_db();
        let samples = SampleSet::full(&db).unwrap();
        let (q, _) = parse_query("b b##b.y,=,4#", &db).unwrap();
        assert!(label_query(&db, &q, &samples).unwrap().is_zero_tuple());
        let (q, _) = parse_query("b b##b.y,=,5#", &db).unwrap();
        assert!(!label_query(&db, &q, &samples).unwrap().is_zero_tuple());
    }
}
