//! CSV tables and on-disk database directories.
//!
//! A database directory holds `schema.txt` plus one `<table>.csv` per table.
//! Each schema line declares one column, in table column order:
//!
//! ```text
//! title.id pk
//! title.kind_id attr
//! movie_companies.movie_id fk:title.id
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Column, ColumnKind, Database, Table, Value};
use crate::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<(String, ColumnKind)>,
}

impl TableSchema {
    pub fn of(table: &Table) -> Self {
        TableSchema {
            name: table.name().to_string(),
            columns: table
                .columns()
                .iter()
                .map(|c| (c.name.clone(), c.kind.clone()))
                .collect(),
        }
    }
}

/// Reads a headered, comma-separated integer file. Columns may appear in any
/// order in the file; the table keeps the schema's order.
pub fn load_csv(path: impl AsRef<Path>, schema: &TableSchema) -> Result<Table> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    let mut positions = vec![usize::MAX; schema.columns.len()];
    for (file_pos, name) in header.iter().enumerate() {
        let name = name.trim();
        let slot = schema
            .columns
            .iter()
            .position(|(c, _)| c == name)
            .ok_or_else(|| {
                Error::Schema(format!("{}: unknown column {name:?} for table {}", path.display(), schema.name))
            })?;
        positions[slot] = file_pos;
    }
    if let Some(missing) = positions.iter().position(|&p| p == usize::MAX) {
        return Err(Error::Schema(format!(
            "{}: column {} missing from header",
            path.display(),
            schema.columns[missing].0
        )));
    }

    let mut values: Vec<Vec<Value>> = vec![Vec::new(); schema.columns.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        // +2: one for the header, one for 1-based numbering
        let lineno = line + 2;
        if record.len() != header.len() {
            return Err(Error::Parse(format!(
                "{}:{lineno}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            )));
        }
        for (slot, &pos) in positions.iter().enumerate() {
            let field = record[pos].trim();
            let v: Value = field.parse().map_err(|_| {
                Error::Parse(format!("{}:{lineno}: malformed integer {field:?}", path.display()))
            })?;
            values[slot].push(v);
        }
    }

    let columns = schema
        .columns
        .iter()
        .zip(values)
        .map(|((name, kind), vals)| Column::new(name.clone(), kind.clone(), vals))
        .collect();
    Table::new(schema.name.clone(), columns)
}

pub fn write_csv(table: &Table, out: &mut impl Write) -> std::io::Result<()> {
    let names: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    writeln!(out, "{}", names.join(","))?;
    let mut line = String::new();
    for row in 0..table.row_count() {
        line.clear();
        for (i, c) in table.columns().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&c.values[row].to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn save_dir(db: &Database, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut schema = String::new();
    for t in db.tables() {
        for c in t.columns() {
            let kind = match &c.kind {
                ColumnKind::PrimaryKey => "pk".to_string(),
                ColumnKind::Attribute => "attr".to_string(),
                ColumnKind::ForeignKey { table, column } => format!("fk:{table}.{column}"),
            };
            schema.push_str(&format!("{}.{} {kind}\n", t.name(), c.name));
        }
    }
    let schema_path = dir.join(SCHEMA_FILE);
    fs::write(&schema_path, schema).map_err(|e| Error::io(&schema_path, e))?;

    for t in db.tables() {
        let path = dir.join(format!("{}.csv", t.name()));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_csv(t, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn load_dir(dir: impl AsRef<Path>) -> Result<Database> {
    let dir = dir.as_ref();
    let schema_path = dir.join(SCHEMA_FILE);
    let text = fs::read_to_string(&schema_path).map_err(|e| Error::io(&schema_path, e))?;
    let schemas = parse_schema(&text)?;
    let tables = schemas
        .iter()
        .map(|s| load_csv(dir.join(format!("{}.csv", s.name)), s))
        .collect::<Result<Vec<_>>>()?;
    Database::new(tables)
}

fn parse_schema(text: &str) -> Result<Vec<TableSchema>> {
    let mut out: Vec<TableSchema> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse(format!("{SCHEMA_FILE}:{}: malformed line {line:?}", i + 1));
        let (qualified, kind) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
        let (table, column) = qualified.split_once('.').ok_or_else(bad)?;
        let kind = match kind.trim() {
            "pk" => ColumnKind::PrimaryKey,
            "attr" => ColumnKind::Attribute,
            other => {
                let target = other.strip_prefix("fk:").ok_or_else(bad)?;
                let (t, c) = target.split_once('.').ok_or_else(bad)?;
                ColumnKind::ForeignKey {
                    table: t.to_string(),
                    column: c.to_string(),
                }
            }
        };
        match out.iter_mut().find(|s| s.name == table) {
            Some(s) => s.columns.push((column.to_string(), kind)),
            None => out.push(TableSchema {
                name: table.to_string(),
                columns: vec![(column.to_string(), kind)],
            }),
        }
    }
    Ok(out)
}
