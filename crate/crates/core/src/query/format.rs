//! Line format: `tables#joins#predicates#cardinality`.
//!
//! ```text
//! title t,movie_companies mc#mc.movie_id=t.id#t.production_year,>,2010#847
//! ```
//!
//! Tables are `name alias` pairs, joins are `a.col=b.col`, predicates are
//! flattened `column,op,literal` triples. Any field may be empty and the
//! cardinality field may be omitted entirely.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{validate, CmpOp, ColumnRef, JoinEdge, Predicate, QuerySpec, TableRef};
use crate::storage::{Database, Value};
use crate::{Error, Result};

pub fn format_query(spec: &QuerySpec, label: Option<u64>) -> String {
    let mut out = String::new();
    for (i, t) in spec.tables.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{} {}", t.table, t.alias);
    }
    out.push('#');
    for (i, j) in spec.joins.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{j}");
    }
    out.push('#');
    for (i, p) in spec.predicates.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{},{},{}", p.column, p.op.symbol(), p.literal);
    }
    out.push('#');
    if let Some(c) = label {
        let _ = write!(out, "{c}");
    }
    out
}

fn column_ref(s: &str) -> Result<ColumnRef> {
    let (alias, column) = s
        .trim()
        .split_once('.')
        .filter(|(a, c)| !a.is_empty() && !c.is_empty())
        .ok_or_else(|| Error::Parse(format!("expected alias.column, found {s:?}")))?;
    Ok(ColumnRef::new(alias, column))
}

fn non_empty(field: &str) -> impl Iterator<Item = &str> {
    field
        .split(',')
        .map(str::trim)
        .filter(|_| !field.trim().is_empty())
}

/// Parses one workload line and validates it against `db`. Joins written
/// with the referenced key first are flipped into foreign-key-first order.
pub fn parse_query(text: &str, db: &Database) -> Result<(QuerySpec, Option<u64>)> {
    let fields: Vec<&str> = text.trim_end_matches(['\r', '\n']).split('#').collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(Error::Parse(format!(
            "expected 3 or 4 '#'-separated fields, found {}",
            fields.len()
        )));
    }

    let mut tables = Vec::new();
    for item in non_empty(fields[0]) {
        let parts: Vec<&str> = item.split_whitespace().collect();
        let [table, alias] = parts[..] else {
            return Err(Error::Parse(format!("expected 'table alias', found {item:?}")));
        };
        tables.push(TableRef::new(table, alias));
    }

    let mut joins = Vec::new();
    for item in non_empty(fields[1]) {
        let (l, r) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected a.col=b.col, found {item:?}")))?;
        joins.push(JoinEdge {
            left: column_ref(l)?,
            right: column_ref(r)?,
        });
    }

    let tokens: Vec<&str> = non_empty(fields[2]).collect();
    if !tokens.len().is_multiple_of(3) {
        return Err(Error::Parse(format!(
            "predicate field must hold column,op,value triples; found {} tokens",
            tokens.len()
        )));
    }
    let mut predicates = Vec::new();
    for triple in tokens.chunks(3) {
        let op = CmpOp::from_symbol(triple[1])
            .ok_or_else(|| Error::Parse(format!("unknown operator {:?}", triple[1])))?;
        let literal: Value = triple[2]
            .parse()
            .map_err(|_| Error::Parse(format!("malformed literal {:?}", triple[2])))?;
        predicates.push(Predicate::new(column_ref(triple[0])?, op, literal));
    }

    let label = match fields.get(3).map(|s| s.trim()) {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<u64>()
                .map_err(|_| Error::Parse(format!("malformed cardinality {s:?}")))?,
        ),
    };

    let aliases: Vec<(String, String)> = tables.iter().map(|t| (t.alias.clone(), t.table.clone())).collect();
    let table_of = |alias: &str| aliases.iter().find(|(a, _)| a == alias).map(|(_, t)| t.as_str());
    let joins = joins.into_iter().map(|j| {
        let (Some(lt), Some(rt)) = (table_of(&j.left.alias), table_of(&j.right.alias)) else {
            return j;
        };
        let reversed = db.fk_edges().iter().any(|e| {
            e.child_table == rt
                && e.child_column == j.right.column
                && e.parent_table == lt
                && e.parent_column == j.left.column
        });
        if reversed {
            JoinEdge {
                left: j.right,
                right: j.left,
            }
        } else {
            j
        }
    });

    let n_tables = tables.len();
    let spec = QuerySpec::new(tables, joins.collect::<Vec<_>>(), predicates);
    if spec.tables.len() != n_tables {
        return Err(Error::Parse("duplicate table entry".into()));
    }
    validate(&spec, db).map_err(Error::Validation)?;
    Ok((spec, label))
}

/// Reads a workload file, skipping blank lines and `--` comments.
pub fn read_workload(path: impl AsRef<Path>, db: &Database) -> Result<Vec<(QuerySpec, Option<u64>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with("--") {
            continue;
        }
        let parsed = parse_query(line, db).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}:{}: {m}", path.display(), i + 1)),
            other => Error::Parse(format!("{}:{}: {other}", path.display(), i + 1)),
        })?;
        out.push(parsed);
    }
    Ok(out)
}

pub fn write_workload<'a>(
    path: impl AsRef<Path>,
    queries: impl IntoIterator<Item = (&'a QuerySpec, Option<u64>)>,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (spec, label) in queries {
        writeln!(w, "{}", format_query(spec, label)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
