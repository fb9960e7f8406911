//! Query representation: a set of tables, a set of PK/FK joins and a set of
//! conjunctive base-table predicates.

mod format;
mod generator;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::storage::{ColumnKind, Database, Value};

pub use format::{format_query, parse_query, read_workload, write_workload};
pub use generator::{generate_query, generate_query_with, generate_workload, generate_workload_with, GeneratorConfig, SeedTablePolicy};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TableRef {
    pub table: String,
    pub alias: String,
}

impl TableRef {
    pub fn new(table: impl Into<String>, alias: impl Into<String>) -> Self {
        TableRef {
            table: table.into(),
            alias: alias.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub alias: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(alias: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            alias: alias.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.alias, self.column)
    }
}

/// Equi-join between a foreign key (`left`) and the key it references
/// (`right`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JoinEdge {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl fmt::Display for JoinEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.left, self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    pub const ALL: [CmpOp; 3] = [CmpOp::Eq, CmpOp::Lt, CmpOp::Gt];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        CmpOp::ALL.into_iter().find(|op| op.symbol() == s)
    }

    /// Position in the operator one-hot block.
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn eval(self, value: Value, literal: Value) -> bool {
        match self {
            CmpOp::Eq => value == literal,
            CmpOp::Lt => value < literal,
            CmpOp::Gt => value > literal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: CmpOp,
    pub literal: Value,
}

impl Predicate {
    pub fn new(column: ColumnRef, op: CmpOp, literal: Value) -> Self {
        Predicate { column, op, literal }
    }
}

/// A query as three sets. Sets are ordered, so two specs built in different
/// insertion orders compare (and format) identically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuerySpec {
    pub tables: BTreeSet<TableRef>,
    pub joins: BTreeSet<JoinEdge>,
    pub predicates: BTreeSet<Predicate>,
}

impl QuerySpec {
    pub fn new(
        tables: impl IntoIterator<Item = TableRef>,
        joins: impl IntoIterator<Item = JoinEdge>,
        predicates: impl IntoIterator<Item = Predicate>,
    ) -> Self {
        QuerySpec {
            tables: tables.into_iter().collect(),
            joins: joins.into_iter().collect(),
            predicates: predicates.into_iter().collect(),
        }
    }

    pub fn join_count(&self) -> usize {
        self.joins.len()
    }

    pub fn table_of(&self, alias: &str) -> Option<&str> {
        self.tables
            .iter()
            .find(|t| t.alias == alias)
            .map(|t| t.table.as_str())
    }

    pub fn predicates_on<'a>(&'a self, alias: &'a str) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.predicates.iter().filter(move |p| p.column.alias == alias)
    }

    /// Join tree adjacency: alias -> (neighbour alias, own join column,
    /// neighbour join column).
    pub(crate) fn adjacency(&self) -> BTreeMap<&str, Vec<(&str, &str, &str)>> {
        let mut adj: BTreeMap<&str, Vec<(&str, &str, &str)>> =
            self.tables.iter().map(|t| (t.alias.as_str(), Vec::new())).collect();
        for j in &self.joins {
            let (l, r) = (&j.left, &j.right);
            adj.entry(&l.alias)
                .or_default()
                .push((&r.alias, &l.column, &r.column));
            adj.entry(&r.alias)
                .or_default()
                .push((&l.alias, &r.column, &l.column));
        }
        adj
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    NoTables,
    UnknownTable(String),
    DuplicateAlias(String),
    UnknownAlias(String),
    UnknownColumn(String),
    NonFkJoin(String),
    ReversedJoin(String),
    KeyColumnPredicate(String),
    Disconnected,
    Cyclic,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::NoTables => write!(f, "query references no tables"),
            ValidationError::UnknownTable(t) => write!(f, "unknown table {t}"),
            ValidationError::DuplicateAlias(a) => write!(f, "duplicate alias {a}"),
            ValidationError::UnknownAlias(a) => write!(f, "undeclared alias {a}"),
            ValidationError::UnknownColumn(c) => write!(f, "unknown column {c}"),
            ValidationError::NonFkJoin(j) => write!(f, "join {j} is not a declared foreign-key edge"),
            ValidationError::ReversedJoin(j) => write!(f, "join {j} must list the foreign-key side first"),
            ValidationError::KeyColumnPredicate(c) => write!(f, "predicate on key column {c}"),
            ValidationError::Disconnected => write!(f, "join graph is disconnected"),
            ValidationError::Cyclic => write!(f, "join graph contains a cycle"),
        }
    }
}

/// Checks every structural invariant of a query against the database and
/// returns all violations found.
pub fn validate(spec: &QuerySpec, db: &Database) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    if spec.tables.is_empty() {
        errors.push(ValidationError::NoTables);
    }
    let mut aliases: BTreeMap<&str, &str> = BTreeMap::new();
    for t in &spec.tables {
        if db.table(&t.table).is_none() {
            errors.push(ValidationError::UnknownTable(t.table.clone()));
        }
        if aliases.insert(&t.alias, &t.table).is_some() {
            errors.push(ValidationError::DuplicateAlias(t.alias.clone()));
        }
    }

    let resolve = |c: &ColumnRef, errors: &mut Vec<ValidationError>| -> Option<ColumnKind> {
        let Some(table) = aliases.get(c.alias.as_str()) else {
            errors.push(ValidationError::UnknownAlias(c.alias.clone()));
            return None;
        };
        let col = db.table(table)?.column(&c.column);
        if col.is_none() {
            errors.push(ValidationError::UnknownColumn(format!("{table}.{}", c.column)));
        }
        col.map(|c| c.kind.clone())
    };

    for j in &spec.joins {
        let l = resolve(&j.left, &mut errors);
        let r = resolve(&j.right, &mut errors);
        if l.is_none() || r.is_none() {
            continue;
        }
        let lt = aliases[j.left.alias.as_str()];
        let rt = aliases[j.right.alias.as_str()];
        let matches = |ct: &str, cc: &str, pt: &str, pc: &str| {
            db.fk_edges().iter().any(|e| {
                e.child_table == ct && e.child_column == cc && e.parent_table == pt && e.parent_column == pc
            })
        };
        if matches(lt, &j.left.column, rt, &j.right.column) {
            continue;
        }
        if matches(rt, &j.right.column, lt, &j.left.column) {
            errors.push(ValidationError::ReversedJoin(j.to_string()));
        } else {
            errors.push(ValidationError::NonFkJoin(j.to_string()));
        }
    }

    for p in &spec.predicates {
        if let Some(kind) = resolve(&p.column, &mut errors) {
            if kind.is_key() {
                errors.push(ValidationError::KeyColumnPredicate(p.column.to_string()));
            }
        }
    }

    if !spec.tables.is_empty() && errors.is_empty() {
        let adj = spec.adjacency();
        let start = spec.tables.iter().next().unwrap().alias.as_str();
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(a) = stack.pop() {
            for &(b, _, _) in &adj[a] {
                if seen.insert(b) {
                    stack.push(b);
                }
            }
        }
        if seen.len() != spec.tables.len() {
            errors.push(ValidationError::Disconnected);
        } else if spec.joins.len() != spec.tables.len() - 1 {
            errors.push(ValidationError::Cyclic);
        }
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{generate_synthetic_db, SynthConfig};

    fn db() -> Database {
        generate_synthetic_db(&SynthConfig::small(50, 60), 1).unwrap()
    }

    fn t_mc() -> QuerySpec {
        QuerySpec::new(
            [TableRef::new("title", "t"), TableRef::new("movie_companies", "mc")],
            [JoinEdge {
                left: ColumnRef::new("mc", "movie_id"),
                right: ColumnRef::new("t", "id"),
            }],
            [Predicate::new(ColumnRef::new("t", "production_year"), CmpOp::Gt, 2000)],
        )
    }

    #[test]
    fn valid_query_passes() {
        assert_eq!(validate(&t_mc(), &db()), Ok(()));
    }

    #[test]
    fn join_without_declared_edge() {
        let q = QuerySpec::new(
            [TableRef::new("movie_info", "mi"), TableRef::new("movie_companies", "mc")],
            [JoinEdge {
                left: ColumnRef::new("mc", "movie_id"),
                right: ColumnRef::new("mi", "movie_id"),
            }],
            [],
        );
        let errs = validate(&q, &db()).unwrap_err();
        assert!(matches!(errs[0], ValidationError::NonFkJoin(_)), "{errs:?}");
    }

    #[test]
    fn predicate_on_key_column() {
        let mut q = t_mc();
        q.predicates
            .insert(Predicate::new(ColumnRef::new("t", "id"), CmpOp::Eq, 3));
        let errs = validate(&q, &db()).unwrap_err();
        assert_eq!(errs, vec![ValidationError::KeyColumnPredicate("t.id".into())]);
    }

    #[test]
    fn structural_errors() {
        let db = db();
        let mut q = t_mc();
        q.joins.clear();
        assert_eq!(validate(&q, &db), Err(vec![ValidationError::Disconnected]));

        let mut q = t_mc();
        q.tables.insert(TableRef::new("nope", "n"));
        assert!(validate(&q, &db).unwrap_err().contains(&ValidationError::UnknownTable("nope".into())));

        let q = QuerySpec::new(
            [TableRef::new("title", "t")],
            [],
            [Predicate::new(ColumnRef::new("x", "kind_id"), CmpOp::Eq, 1)],
        );
        assert_eq!(validate(&q, &db), Err(vec![ValidationError::UnknownAlias("x".into())]));

        let q = QuerySpec::new(
            [TableRef::new("title", "t"), TableRef::new("movie_companies", "t")],
            [],
            [],
        );
        assert!(validate(&q, &db).unwrap_err().contains(&ValidationError::DuplicateAlias("t".into())));

        let q = QuerySpec::new(
            [TableRef::new("title", "t"), TableRef::new("movie_companies", "mc")],
            [JoinEdge {
                left: ColumnRef::new("t", "id"),
                right: ColumnRef::new("mc", "movie_id"),
            }],
            [],
        );
        assert!(matches!(validate(&q, &db).unwrap_err()[0], ValidationError::ReversedJoin(_)));
    }

    #[test]
    fn op_symbols_round_trip() {
        for op in CmpOp::ALL {
            assert_eq!(CmpOp::from_symbol(op.symbol()), Some(op));
        }
        assert_eq!(CmpOp::from_symbol("<="), None);
        assert_eq!([CmpOp::Eq.index(), CmpOp::Lt.index(), CmpOp::Gt.index()], [0, 1, 2]);
    }
}
