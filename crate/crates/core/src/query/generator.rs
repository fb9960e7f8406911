//! Random workload generator.
//!
//! A query is built by drawing the number of joins uniformly, picking a seed
//! table, then repeatedly adding a uniformly chosen table that can join with
//! the tables picked so far. Each base table then receives a uniformly drawn
//! number of predicates on distinct non-key columns, with a uniformly drawn
//! operator and a literal taken from a uniformly chosen row of that column.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{format_query, CmpOp, ColumnRef, JoinEdge, Predicate, QuerySpec, TableRef};
use crate::storage::Database;
use crate::{Error, Result};

/// How the first table of a query is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedTablePolicy {
    /// Queries with joins start at a table referenced by some foreign key;
    /// single-table queries may use any table.
    #[default]
    ReferencedUnlessSingle,
    /// Always start at a referenced table, including single-table queries.
    AlwaysReferenced,
    /// Any table.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub max_joins: usize,
    pub seed_table: SeedTablePolicy,
}

impl GeneratorConfig {
    pub fn new(max_joins: usize) -> Self {
        GeneratorConfig {
            max_joins,
            seed_table: SeedTablePolicy::default(),
        }
    }
}

/// Bound on attempts per requested query before uniqueness is declared
/// exhausted.
pub const RETRIES_PER_QUERY: usize = 1000;

pub fn generate_query(db: &Database, max_joins: usize, rng: &mut impl Rng) -> QuerySpec {
    generate_query_with(db, &GeneratorConfig::new(max_joins), rng)
}

pub fn generate_query_with(db: &Database, config: &GeneratorConfig, rng: &mut impl Rng) -> QuerySpec {
    let n_joins = rng.gen_range(0..=config.max_joins);

    let all: Vec<&str> = db.table_names().collect();
    let referenced = db.referenced_tables();
    let use_referenced = match config.seed_table {
        SeedTablePolicy::ReferencedUnlessSingle => n_joins > 0,
        SeedTablePolicy::AlwaysReferenced => true,
        SeedTablePolicy::Any => false,
    };
    let pool = if use_referenced && !referenced.is_empty() {
        &referenced
    } else {
        &all
    };
    let seed = *pool.choose(rng).expect("database has at least one table");

    let mut chosen: Vec<&str> = vec![seed];
    let mut joins = Vec::new();
    for _ in 0..n_joins {
        let candidates: Vec<&str> = all
            .iter()
            .copied()
            .filter(|t| !chosen.contains(t))
            .filter(|t| chosen.iter().any(|c| db.edges_between(c, t).next().is_some()))
            .collect();
        let Some(&next) = candidates.choose(rng) else {
            break;
        };
        let edges: Vec<_> = chosen
            .iter()
            .flat_map(|c| db.edges_between(c, next))
            .collect();
        let edge = *edges.choose(rng).expect("candidate has an edge");
        let alias = |t: &str| db.default_alias(t).unwrap().to_string();
        joins.push(JoinEdge {
            left: ColumnRef::new(alias(&edge.child_table), edge.child_column.clone()),
            right: ColumnRef::new(alias(&edge.parent_table), edge.parent_column.clone()),
        });
        chosen.push(next);
    }

    let mut predicates = Vec::new();
    for &name in &chosen {
        let table = db.table(name).unwrap();
        if table.row_count() == 0 {
            continue;
        }
        let attrs: Vec<_> = table.attribute_columns().collect();
        let k = rng.gen_range(0..=attrs.len());
        for i in rand::seq::index::sample(rng, attrs.len(), k) {
            let col = attrs[i];
            let op = CmpOp::ALL[rng.gen_range(0..3)];
            let literal = col.values[rng.gen_range(0..col.values.len())];
            let alias = db.default_alias(name).unwrap();
            predicates.push(Predicate::new(ColumnRef::new(alias, col.name.clone()), op, literal));
        }
    }

    let tables = chosen
        .iter()
        .map(|&t| TableRef::new(t, db.default_alias(t).unwrap()));
    QuerySpec::new(tables, joins, predicates)
}

pub fn generate_workload(db: &Database, n: usize, max_joins: usize, seed: u64) -> Result<Vec<QuerySpec>> {
    generate_workload_with(db, n, &GeneratorConfig::new(max_joins), seed)
}

/// Generates `n` pairwise-distinct queries (distinct by canonical text).
pub fn generate_workload_with(
    db: &Database,
    n: usize,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<Vec<QuerySpec>> {
    if n == 0 {
        return Err(Error::InvalidArgument("workload size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let budget = RETRIES_PER_QUERY.saturating_mul(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == budget {
            return Err(Error::WorkloadExhausted {
                attempts,
                found: out.len(),
                wanted: n,
            });
        }
        attempts += 1;
        let q = generate_query_with(db, config, &mut rng);
        if seen.insert(format_query(&q, None)) {
            out.push(q);
        }
    }
    Ok(out)
}
