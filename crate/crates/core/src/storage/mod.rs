//! Immutable columnar database snapshot.
//!
//! Every value is a 64-bit signed integer. A [`Database`] is built once
//! (loaded from CSV or synthesized) and never mutated afterwards, so it can
//! be shared freely between threads.

mod csv_io;
mod index;
mod sample;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use csv_io::{load_csv, load_dir, save_dir, write_csv, TableSchema};
pub use index::{build_index, HashIndex, IndexSet};
pub use sample::{draw_sample, MaterializedSample, SampleSet};
pub use synth::{generate_synthetic_db, SynthConfig, SYNTH_TABLES};

pub type Value = i64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnKind {
    PrimaryKey,
    ForeignKey { table: String, column: String },
    Attribute,
}

impl ColumnKind {
    pub fn is_key(&self) -> bool {
        !matches!(self, ColumnKind::Attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Value>,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, values: Vec<Value>) -> Self {
        Column {
            name: name.into(),
            kind,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    row_count: usize,
}

impl Table {
    /// Builds a table, checking that all columns have the same length, that
    /// there is exactly one primary key and that its values are distinct.
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let name = name.into();
        let row_count = columns.first().map_or(0, |c| c.values.len());
        if let Some(bad) = columns.iter().find(|c| c.values.len() != row_count) {
            return Err(Error::Schema(format!(
                "column {name}.{} has {} values, expected {row_count}",
                bad.name,
                bad.values.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column {name}.{}", c.name)));
            }
        }
        let pks: Vec<&Column> = columns
            .iter()
            .filter(|c| c.kind == ColumnKind::PrimaryKey)
            .collect();
        if pks.len() != 1 {
            return Err(Error::Schema(format!(
                "table {name} must have exactly one primary key, found {}",
                pks.len()
            )));
        }
        let mut distinct = HashSet::with_capacity(row_count);
        if !pks[0].values.iter().all(|v| distinct.insert(*v)) {
            return Err(Error::Schema(format!(
                "primary key {name}.{} contains duplicates",
                pks[0].name
            )));
        }
        Ok(Table {
            name,
            columns,
            row_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn primary_key(&self) -> &Column {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::PrimaryKey)
            .expect("validated at construction")
    }

    /// Non-key columns, the only ones predicates may reference.
    pub fn attribute_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| !c.kind.is_key())
    }
}

/// A declared join edge from a foreign-key column to the primary key it
/// references.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FkEdge {
    pub child_table: String,
    pub child_column: String,
    pub parent_table: String,
    pub parent_column: String,
}

impl fmt::Display for FkEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}={}.{}",
            self.child_table, self.child_column, self.parent_table, self.parent_column
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: Value,
    pub max: Value,
    pub distinct_count: usize,
}

pub fn compute_stats(column: &Column) -> Result<ColumnStats> {
    let (&first, rest) = column
        .values
        .split_first()
        .ok_or_else(|| Error::EmptyColumn(column.name.clone()))?;
    let (mut min, mut max) = (first, first);
    for &v in rest {
        min = min.min(v);
        max = max.max(v);
    }
    let distinct_count = column.values.iter().collect::<HashSet<_>>().len();
    Ok(ColumnStats {
        min,
        max,
        distinct_count,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    tables: BTreeMap<String, Table>,
    fk_edges: Vec<FkEdge>,
    stats: BTreeMap<(String, String), ColumnStats>,
    aliases: BTreeMap<String, String>,
}

impl Database {
    /// Assembles a database from tables; join edges are derived from the
    /// foreign-key column kinds. Referential integrity is checked by a full
    /// scan.
    pub fn new(tables: Vec<Table>) -> Result<Self> {
        let mut by_name = BTreeMap::new();
        for t in tables {
            let name = t.name.clone();
            if by_name.insert(name.clone(), t).is_some() {
                return Err(Error::Schema(format!("duplicate table {name}")));
            }
        }

        let mut fk_edges = Vec::new();
        for t in by_name.values() {
            for c in &t.columns {
                let ColumnKind::ForeignKey { table, column } = &c.kind else {
                    continue;
                };
                let parent = by_name.get(table).ok_or_else(|| {
                    Error::Schema(format!("{}.{} references unknown table {table}", t.name, c.name))
                })?;
                let pcol = parent.column(column).ok_or_else(|| {
                    Error::Schema(format!(
                        "{}.{} references unknown column {table}.{column}",
                        t.name, c.name
                    ))
                })?;
                if pcol.kind != ColumnKind::PrimaryKey {
                    return Err(Error::Schema(format!(
                        "{}.{} references non-key column {table}.{column}",
                        t.name, c.name
                    )));
                }
                let keys: HashSet<Value> = pcol.values.iter().copied().collect();
                if let Some(v) = c.values.iter().find(|v| !keys.contains(v)) {
                    return Err(Error::Schema(format!(
                        "referential integrity violated: {}.{} value {v} missing from {table}.{column}",
                        t.name, c.name
                    )));
                }
                fk_edges.push(FkEdge {
                    child_table: t.name.clone(),
                    child_column: c.name.clone(),
                    parent_table: table.clone(),
                    parent_column: column.clone(),
                });
            }
        }
        fk_edges.sort();

        let mut stats = BTreeMap::new();
        for t in by_name.values() {
            if t.row_count == 0 {
                continue;
            }
            for c in &t.columns {
                stats.insert((t.name.clone(), c.name.clone()), compute_stats(c)?);
            }
        }

        let aliases = default_aliases(by_name.keys());
        Ok(Database {
            tables: by_name,
            fk_edges,
            stats,
            aliases,
        })
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    /// The universe of joinable pairs, sorted.
    pub fn fk_edges(&self) -> &[FkEdge] {
        &self.fk_edges
    }

    /// Cached statistics; `None` for unknown columns or empty tables.
    pub fn stats(&self, table: &str, column: &str) -> Option<&ColumnStats> {
        self.stats.get(&(table.to_string(), column.to_string()))
    }

    /// Short alias used by the workload generator, e.g. `movie_companies`
    /// becomes `mc`.
    pub fn default_alias(&self, table: &str) -> Option<&str> {
        self.aliases.get(table).map(String::as_str)
    }

    /// Edges connecting the two tables in either orientation.
    pub fn edges_between<'a>(&'a self, a: &'a str, b: &'a str) -> impl Iterator<Item = &'a FkEdge> {
        self.fk_edges.iter().filter(move |e| {
            (e.child_table == a && e.parent_table == b) || (e.child_table == b && e.parent_table == a)
        })
    }

    /// Tables that are referenced by at least one foreign key.
    pub fn referenced_tables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.fk_edges.iter().map(|e| e.parent_table.as_str()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn default_aliases<'a>(names: impl Iterator<Item = &'a String>) -> BTreeMap<String, String> {
    let mut used = HashSet::new();
    let mut out = BTreeMap::new();
    for name in names {
        let base: String = name
            .split('_')
            .filter_map(|w| w.chars().next())
            .collect::<String>()
            .to_lowercase();
        let base = if base.is_empty() { "t".to_string() } else { base };
        let mut alias = base.clone();
        let mut n = 2;
        while !used.insert(alias.clone()) {
            alias = format!("{base}{n}");
            n += 1;
        }
        out.insert(name.clone(), alias);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, kind: ColumnKind, values: &[Value]) -> Column {
        Column::new(name, kind, values.to_vec())
    }

    #[test]
    fn stats_hand_counts() {
        let s = compute_stats(&col("x", ColumnKind::Attribute, &[5, 1, 5])).unwrap();
        assert_eq!((s.min, s.max, s.distinct_count), (1, 5, 2));
        let s = compute_stats(&col("x", ColumnKind::Attribute, &[7])).unwrap();
        assert_eq!((s.min, s.max, s.distinct_count), (7, 7, 1));
        assert!(matches!(
            compute_stats(&col("x", ColumnKind::Attribute, &[])),
            Err(Error::EmptyColumn(_))
        ));
    }

    #[test]
    fn table_requires_single_distinct_pk() {
        let dup = Table::new("a", vec![col("id", ColumnKind::PrimaryKey, &[1, 1])]);
        assert!(dup.is_err());
        let none = Table::new("a", vec![col("x", ColumnKind::Attribute, &[1])]);
        assert!(none.is_err());
        let ragged = Table::new(
            "a",
            vec![
                col("id", ColumnKind::PrimaryKey, &[1, 2]),
                col("x", ColumnKind::Attribute, &[1]),
            ],
        );
        assert!(ragged.is_err());
    }

    #[test]
    fn referential_integrity_is_enforced() {
        let fk = ColumnKind::ForeignKey {
            table: "a".into(),
            column: "id".into(),
        };
        let a = Table::new("a", vec![col("id", ColumnKind::PrimaryKey, &[1, 2])]).unwrap();
        let b = Table::new(
            "b",
            vec![col("id", ColumnKind::PrimaryKey, &[1, 2, 3]), col("a_id", fk.clone(), &[1, 1, 3])],
        )
        .unwrap();
        assert!(Database::new(vec![a.clone(), b]).is_err());
        let b = Table::new(
            "b",
            vec![col("id", ColumnKind::PrimaryKey, &[1, 2, 3]), col("a_id", fk, &[1, 1, 2])],
        )
        .unwrap();
        let db = Database::new(vec![a, b]).unwrap();
        assert_eq!(db.fk_edges().len(), 1);
        assert_eq!(db.fk_edges()[0].to_string(), "b.a_id=a.id");
        assert_eq!(db.referenced_tables(), vec!["a"]);
    }

    #[test]
    fn aliases_are_initials_and_unique() {
        let names: Vec<String> = ["movie_info", "movie_info_idx", "mi", "title"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let a = default_aliases(names.iter());
        assert_eq!(a["movie_info"], "mi");
        assert_eq!(a["movie_info_idx"], "mii");
        assert_eq!(a["mi"], "m");
        assert_eq!(a["title"], "t");
    }
}
