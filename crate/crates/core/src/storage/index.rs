use std::collections::{BTreeMap, HashMap};

use super::{Database, Table, Value};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct HashIndex {
    pub table: String,
    pub key_column: String,
    postings: HashMap<Value, Vec<usize>>,
}

impl HashIndex {
    /// Row indices whose key equals `key`, in ascending order.
    pub fn lookup(&self, key: Value) -> &[usize] {
        self.postings.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn distinct_keys(&self) -> usize {
        self.postings.len()
    }
}

pub fn build_index(table: &Table, column: &str) -> Result<HashIndex> {
    let col = table
        .column(column)
        .ok_or_else(|| Error::Schema(format!("unknown column {}.{column}", table.name())))?;
    let mut postings: HashMap<Value, Vec<usize>> = HashMap::new();
    for (row, &v) in col.values.iter().enumerate() {
        postings.entry(v).or_default().push(row);
    }
    Ok(HashIndex {
        table: table.name().to_string(),
        key_column: column.to_string(),
        postings,
    })
}

/// Hash indexes keyed by `(table, column)`.
#[derive(Debug, Clone, Default)]
pub struct IndexSet {
    indexes: BTreeMap<(String, String), HashIndex>,
}

impl IndexSet {
    /// Indexes both sides of every declared foreign-key edge.
    pub fn for_join_keys(db: &Database) -> Result<Self> {
        let mut set = IndexSet::default();
        for e in db.fk_edges() {
            for (t, c) in [(&e.child_table, &e.child_column), (&e.parent_table, &e.parent_column)] {
                if let std::collections::btree_map::Entry::Vacant(slot) = set.indexes.entry((t.clone(), c.clone())) {
                    slot.insert(build_index(db.table(t).expect("edge tables exist"), c)?);
                }
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, index: HashIndex) {
        self.indexes
            .insert((index.table.clone(), index.key_column.clone()), index);
    }

    pub fn get(&self, table: &str, column: &str) -> Result<&HashIndex> {
        self.indexes
            .get(&(table.to_string(), column.to_string()))
            .ok_or_else(|| Error::MissingIndex(format!("{table}.{column}")))
    }
}
