//! Sampling-based competitors.
//!
//! Random sampling (RS) extrapolates per-table selectivities from the
//! materialized samples and combines tables under the independence
//! assumption. Index-based join sampling (IBJS) pushes the qualifying sample
//! tuples of one driver table through hash indexes along the join tree.
//! Both fall back the same way when a sample has no qualifying row, and both
//! never return less than one tuple.

use std::collections::{BTreeMap, VecDeque};

use crate::executor::eval_predicates_on_sample;
use crate::query::{Predicate, QuerySpec};
use crate::storage::{Database, IndexSet, SampleSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct TableEstimate {
    /// selectivity as `hits / sample_size`, kept apart so that
    /// extrapolation is computed as `hits · rows / sample_size`
    hits: f64,
    sample_size: f64,
    rows: f64,
}

impl TableEstimate {
    fn filtered_rows(&self) -> f64 {
        self.hits * self.rows / self.sample_size
    }
}

/// Selectivity of the conjunction on the sample. An empty result retries
/// each conjunct on its own; a conjunct that still has no qualifying sample
/// row contributes `1 / distinct_count` of its column.
/// Returned as `(numerator, denominator)`.
fn table_selectivity(db: &Database, samples: &SampleSet, table: &str, preds: &[&Predicate]) -> Result<(f64, f64)> {
    if preds.is_empty() {
        return Ok((1.0, 1.0));
    }
    let sample = samples.get(table)?;
    let s = sample.size() as f64;
    let hits = eval_predicates_on_sample(sample, preds)?.count_ones();
    if hits > 0 {
        return Ok((hits as f64, s));
    }
    let mut sel = 1.0;
    for &p in preds {
        let hits = eval_predicates_on_sample(sample, &[p])?.count_ones();
        sel *= if hits > 0 {
            hits as f64 / s
        } else {
            let dv = db
                .stats(table, &p.column.column)
                .map_or(1, |st| st.distinct_count.max(1));
            1.0 / dv as f64
        };
    }
    Ok((sel, 1.0))
}

fn table_estimates(db: &Database, samples: &SampleSet, spec: &QuerySpec) -> Result<BTreeMap<String, TableEstimate>> {
    spec.tables
        .iter()
        .map(|t| {
            let rows = db
                .table(&t.table)
                .ok_or_else(|| Error::Schema(format!("unknown table {}", t.table)))?
                .row_count() as f64;
            let preds: Vec<&Predicate> = spec.predicates_on(&t.alias).collect();
            let (hits, sample_size) = table_selectivity(db, samples, &t.table, &preds)?;
            Ok((
                t.alias.clone(),
                TableEstimate {
                    hits,
                    sample_size,
                    rows,
                },
            ))
        })
        .collect()
}

fn distinct(db: &Database, spec: &QuerySpec, alias: &str, column: &str) -> f64 {
    spec.table_of(alias)
        .and_then(|t| db.stats(t, column))
        .map_or(1.0, |s| s.distinct_count.max(1) as f64)
}

pub fn rs_estimate(db: &Database, samples: &SampleSet, spec: &QuerySpec) -> Result<f64> {
    let tables = table_estimates(db, samples, spec)?;
    let mut estimate: f64 = tables.values().map(TableEstimate::filtered_rows).product();
    for j in &spec.joins {
        let dl = distinct(db, spec, &j.left.alias, &j.left.column);
        let dr = distinct(db, spec, &j.right.alias, &j.right.column);
        estimate /= dl.max(dr);
    }
    Ok(estimate.max(1.0))
}

pub fn ibjs_estimate(db: &Database, samples: &SampleSet, indexes: &IndexSet, spec: &QuerySpec) -> Result<f64> {
    let table_of = |alias: &str| {
        spec.table_of(alias)
            .ok_or_else(|| Error::InvalidArgument(format!("undeclared alias {alias}")))
    };
    for j in &spec.joins {
        indexes.get(table_of(&j.left.alias)?, &j.left.column)?;
        indexes.get(table_of(&j.right.alias)?, &j.right.column)?;
    }
    if spec.joins.is_empty() {
        return rs_estimate(db, samples, spec);
    }

    let estimates = table_estimates(db, samples, spec)?;
    let (driver, driver_est) = estimates
        .iter()
        .min_by(|a, b| a.1.filtered_rows().total_cmp(&b.1.filtered_rows()))
        .expect("query has tables");
    let driver_table = table_of(driver)?;
    let sample = samples.get(driver_table)?;
    let preds: Vec<&Predicate> = spec.predicates_on(driver).collect();
    let bitmap = eval_predicates_on_sample(sample, &preds)?;
    if bitmap.count_ones() == 0 {
        return rs_estimate(db, samples, spec);
    }

    // Breadth-first walk of the join tree from the driver.
    let adj = spec.adjacency();
    let mut order: Vec<&str> = vec![driver];
    let mut steps = Vec::new();
    let mut queue = VecDeque::from([driver.as_str()]);
    while let Some(a) = queue.pop_front() {
        for &(b, a_col, b_col) in &adj[a] {
            if !order.contains(&b) {
                order.push(b);
                steps.push((a, a_col, b, b_col));
                queue.push_back(b);
            }
        }
    }

    let mut tuples: Vec<Vec<usize>> = (0..sample.size())
        .filter(|&i| bitmap.get(i))
        .map(|i| vec![sample.row_indices[i]])
        .collect();
    let mut placed: Vec<&str> = vec![driver];
    for (from, from_col, to, to_col) in steps {
        let from_pos = placed.iter().position(|&a| a == from).unwrap();
        let from_values = &db.table(table_of(from)?).unwrap().column(from_col).unwrap().values;
        let to_table = db.table(table_of(to)?).unwrap();
        let index = indexes.get(to_table.name(), to_col)?;
        let to_preds: Vec<(&[i64], &Predicate)> = spec
            .predicates_on(to)
            .map(|p| {
                to_table
                    .column(&p.column.column)
                    .map(|c| (c.values.as_slice(), p))
                    .ok_or_else(|| Error::Schema(format!("unknown column {}.{}", to_table.name(), p.column.column)))
            })
            .collect::<Result<_>>()?;

        let mut next = Vec::new();
        for t in &tuples {
            let key = from_values[t[from_pos]];
            for &row in index.lookup(key) {
                if to_preds.iter().all(|(vals, p)| p.op.eval(vals[row], p.literal)) {
                    let mut extended = t.clone();
                    extended.push(row);
                    next.push(extended);
                }
            }
        }
        if next.is_empty() {
            return rs_estimate(db, samples, spec);
        }
        tuples = next;
        placed.push(to);
    }

    let estimate = tuples.len() as f64 * driver_est.rows / sample.size() as f64;
    Ok(estimate.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::true_cardinality;
    use crate::query::parse_query;
    use crate::storage::{Column, ColumnKind, Table, Value};

    fn attr_db(n: usize, a: Vec<Value>, b: Vec<Value>) -> Database {
        let t = Table::new(
            "t",
            vec![
                Column::new("id", ColumnKind::PrimaryKey, (0..n as Value).collect()),
                Column::new("a", ColumnKind::Attribute, a),
                Column::new("b", ColumnKind::Attribute, b),
            ],
        )
        .unwrap();
        Database::new(vec![t]).unwrap()
    }

    #[test]
    fn single_table_extrapolation() {
        // samples depend only on table name, size and seed, so plant a = 1 on
        // exactly seven sampled rows
        let placeholder = attr_db(1000, vec![0; 1000], vec![0; 1000]);
        let rows = SampleSet::draw(&placeholder, 100, 1).unwrap().get("t").unwrap().row_indices.clone();
        let mut a = vec![2; 1000];
        for &r in &rows[..7] {
            a[r] = 1;
        }
        let db = attr_db(1000, a, vec![0; 1000]);
        let samples = SampleSet::draw(&db, 100, 1).unwrap();
        let (q, _) = parse_query("t t##t.a,=,1#", &db).unwrap();
        assert_eq!(rs_estimate(&db, &samples, &q).unwrap(), 70.0);
        let (q, _) = parse_query("t t##t.a,>,1#", &db).unwrap();
        assert_eq!(rs_estimate(&db, &samples, &q).unwrap(), 930.0);
    }

    #[test]
    fn conjunct_fallback_uses_distinct_counts_and_clamps() {
        // a has 50 distinct values and b has 20; both literals are absent from
        // the 100-row sample taken over rows that only hold a < 49, b < 19
        let n = 1000;
        let a: Vec<Value> = (0..n).map(|i| if i == 0 { 49 } else { (i % 49) as Value }).collect();
        let b: Vec<Value> = (0..n).map(|i| if i == 1 { 19 } else { (i % 19) as Value }).collect();
        let db = attr_db(n, a, b);
        assert_eq!(db.stats("t", "a").unwrap().distinct_count, 50);
        assert_eq!(db.stats("t", "b").unwrap().distinct_count, 20);
        let samples = (0..)
            .map(|seed| SampleSet::draw(&db, 100, seed).unwrap())
            .find(|s| !s.get("t").unwrap().row_indices.iter().any(|&r| r < 2))
            .unwrap();
        let (q, _) = parse_query("t t##t.a,=,49,t.b,=,19#", &db).unwrap();
        // 1000 * (1/50) * (1/20) = 1
        assert!((rs_estimate(&db, &samples, &q).unwrap() - 1.0).abs() < 1e-12);
        let (q, _) = parse_query("t t##t.a,=,49#", &db).unwrap();
        assert!((rs_estimate(&db, &samples, &q).unwrap() - 20.0).abs() < 1e-9);
    }

    fn star_db() -> Database {
        crate::storage::generate_synthetic_db(&crate::storage::SynthConfig::small(300, 600), 3).unwrap()
    }

    #[test]
    fn pk_fk_join_without_predicates_is_exact_under_rs() {
        let db = star_db();
        let samples = SampleSet::draw(&db, 50, 1).unwrap();
        let (q, _) = parse_query("title t,movie_companies mc#mc.movie_id=t.id##", &db).unwrap();
        let truth = true_cardinality(&db, &q).unwrap() as f64;
        assert!((rs_estimate(&db, &samples, &q).unwrap() / truth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ibjs_degenerate_cases_match_rs() {
        let db = star_db();
        let samples = SampleSet::draw(&db, 50, 1).unwrap();
        let idx = IndexSet::for_join_keys(&db).unwrap();
        let (q, _) = parse_query("title t##t.kind_id,=,1#", &db).unwrap();
        assert_eq!(
            ibjs_estimate(&db, &samples, &idx, &q).unwrap(),
            rs_estimate(&db, &samples, &q).unwrap()
        );
        // a year that never occurs: driver popcount is zero
        let (q, _) = parse_query(
            "title t,movie_info mi#mi.movie_id=t.id#t.production_year,<,1000#",
            &db,
        )
        .unwrap();
        assert_eq!(
            ibjs_estimate(&db, &samples, &idx, &q).unwrap(),
            rs_estimate(&db, &samples, &q).unwrap()
        );
    }

    #[test]
    fn ibjs_with_full_sample_is_exact() {
        let db = star_db();
        let samples = SampleSet::full(&db).unwrap();
        let idx = IndexSet::for_join_keys(&db).unwrap();
        let workload = crate::query::generate_workload(&db, 150, 3, 5).unwrap();
        for q in workload.iter().filter(|q| q.join_count() > 0) {
            let truth = true_cardinality(&db, q).unwrap();
            if truth == 0 {
                continue;
            }
            let est = ibjs_estimate(&db, &samples, &idx, q).unwrap();
            assert_eq!(est, truth as f64, "{}", crate::query::format_query(q, None));
        }
    }

    #[test]
    fn ibjs_reports_missing_index() {
        let db = star_db();
        let samples = SampleSet::draw(&db, 50, 1).unwrap();
        let (q, _) = parse_query("title t,movie_info mi#mi.movie_id=t.id##", &db).unwrap();
        match ibjs_estimate(&db, &samples, &IndexSet::default(), &q) {
            Err(Error::MissingIndex(c)) => assert!(c == "movie_info.movie_id" || c == "title.id"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimates_are_at_least_one() {
        let db = star_db();
        let samples = SampleSet::draw(&db, 30, 2).unwrap();
        let idx = IndexSet::for_join_keys(&db).unwrap();
        for q in crate::query::generate_workload(&db, 300, 2, 6).unwrap() {
            assert!(rs_estimate(&db, &samples, &q).unwrap() >= 1.0);
            assert!(ibjs_estimate(&db, &samples, &idx, &q).unwrap() >= 1.0);
        }
    }
}
