//! Correlated synthetic database with a movie-database-like star schema.
//!
//! One fact table `title(id, kind_id, production_year)` is referenced by five
//! child tables through `movie_id`. Every title carries a hidden variable
//! `z ~ U(0,1)`. With probability `rho` an attribute value (of the title or
//! of one of its children) is derived from `z` instead of fresh noise, and a
//! child row picks its parent title with a `z`-dependent weight instead of
//! uniformly. Because `frac(m*z + phase + noise)` is uniform whenever `z` is,
//! marginal attribute distributions do not depend on `rho`; only the
//! dependence between them (and hence join-crossing correlation) does.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Column, ColumnKind, Database, Table, Value};
use crate::{Error, Result};

pub const SYNTH_TABLES: [&str; 6] = [
    "title",
    "movie_companies",
    "movie_info",
    "movie_info_idx",
    "movie_keyword",
    "cast_info",
];

struct AttrSpec {
    table: &'static str,
    column: &'static str,
    lo: Value,
    hi: Value,
    /// exponent applied to the uniform draw; > 1 skews towards `lo`
    skew: f64,
    freq: f64,
    phase: f64,
}

const ATTRS: [AttrSpec; 8] = [
    AttrSpec { table: "title", column: "kind_id", lo: 1, hi: 7, skew: 1.8, freq: 2.0, phase: 0.3 },
    AttrSpec { table: "title", column: "production_year", lo: 1880, hi: 2019, skew: 0.5, freq: 1.0, phase: 0.0 },
    AttrSpec { table: "movie_companies", column: "company_id", lo: 1, hi: 500, skew: 2.5, freq: 3.0, phase: 0.1 },
    AttrSpec { table: "movie_companies", column: "company_type_id", lo: 1, hi: 4, skew: 1.5, freq: 1.0, phase: 0.5 },
    AttrSpec { table: "movie_info", column: "info_type_id", lo: 1, hi: 110, skew: 2.0, freq: 2.0, phase: 0.7 },
    AttrSpec { table: "movie_info_idx", column: "info_type_id", lo: 99, hi: 113, skew: 1.2, freq: 1.0, phase: 0.25 },
    AttrSpec { table: "movie_keyword", column: "keyword_id", lo: 1, hi: 1000, skew: 3.0, freq: 5.0, phase: 0.0 },
    AttrSpec { table: "cast_info", column: "role_id", lo: 1, hi: 11, skew: 1.5, freq: 1.0, phase: 0.6 },
];

const CHILD_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub rows: BTreeMap<String, usize>,
    /// correlation strength in [0, 1]
    pub rho: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::small(100_000, 200_000).with_rho(0.8)
    }
}

impl SynthConfig {
    pub fn small(title_rows: usize, child_rows: usize) -> Self {
        let rows = SYNTH_TABLES
            .iter()
            .map(|&t| (t.to_string(), if t == "title" { title_rows } else { child_rows }))
            .collect();
        SynthConfig { rows, rho: 0.8 }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// Parses `key = value` lines (`rows.<table>`, `rho`, `seed`), starting
    /// from the defaults. Returns the config and the seed if one was given.
    pub fn parse(text: &str) -> Result<(SynthConfig, Option<u64>)> {
        let mut cfg = SynthConfig::default();
        let mut seed = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
            let bad = || Error::Parse(format!("config line {}: bad value {value:?} for {key}", i + 1));
            match key {
                "rho" => cfg.rho = value.parse().map_err(|_| bad())?,
                "seed" => seed = Some(value.parse().map_err(|_| bad())?),
                _ => {
                    let table = key
                        .strip_prefix("rows.")
                        .filter(|t| SYNTH_TABLES.contains(t))
                        .ok_or_else(|| Error::Parse(format!("config line {}: unknown key {key}", i + 1)))?;
                    cfg.rows.insert(table.to_string(), value.parse().map_err(|_| bad())?);
                }
            }
        }
        Ok((cfg, seed))
    }

    fn rows_of(&self, table: &str) -> Result<usize> {
        match self.rows.get(table) {
            Some(&n) if n >= 1 => Ok(n),
            Some(_) => Err(Error::InvalidArgument(format!("rows.{table} must be >= 1"))),
            None => Err(Error::InvalidArgument(format!("missing rows.{table}"))),
        }
    }
}

fn attr_value(spec: &AttrSpec, u: f64) -> Value {
    let span = (spec.hi - spec.lo + 1) as f64;
    let offset = (span * u.powf(spec.skew)).floor() as Value;
    (spec.lo + offset).min(spec.hi)
}

fn wrap(x: f64) -> f64 {
    x.rem_euclid(1.0)
}

fn fanout_weight(z: f64) -> f64 {
    (0.25 + z).powi(2)
}

pub fn generate_synthetic_db(config: &SynthConfig, seed: u64) -> Result<Database> {
    if !(0.0..=1.0).contains(&config.rho) {
        return Err(Error::InvalidArgument(format!("rho must be in [0, 1], got {}", config.rho)));
    }
    let rho = config.rho;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_titles = config.rows_of("title")?;
    let z: Vec<f64> = (0..n_titles).map(|_| rng.gen::<f64>()).collect();

    let mut tables = Vec::with_capacity(SYNTH_TABLES.len());
    let mut title_cols = vec![Column::new("id", ColumnKind::PrimaryKey, (1..=n_titles as Value).collect())];
    for spec in ATTRS.iter().filter(|a| a.table == "title") {
        let values = z
            .iter()
            .map(|&zi| {
                let u = if rng.gen::<f64>() < rho {
                    wrap(spec.freq * zi + spec.phase)
                } else {
                    rng.gen()
                };
                attr_value(spec, u)
            })
            .collect();
        title_cols.push(Column::new(spec.column, ColumnKind::Attribute, values));
    }
    tables.push(Table::new("title", title_cols)?);

    let mut cumulative = Vec::with_capacity(n_titles);
    let mut acc = 0.0;
    for &zi in &z {
        acc += fanout_weight(zi);
        cumulative.push(acc);
    }

    for &child in &SYNTH_TABLES[1..] {
        let n = config.rows_of(child)?;
        let parents: Vec<usize> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < rho {
                    let target = rng.gen::<f64>() * acc;
                    cumulative.partition_point(|&c| c <= target).min(n_titles - 1)
                } else {
                    rng.gen_range(0..n_titles)
                }
            })
            .collect();
        let mut cols = vec![
            Column::new("id", ColumnKind::PrimaryKey, (1..=n as Value).collect()),
            Column::new(
                "movie_id",
                ColumnKind::ForeignKey {
                    table: "title".into(),
                    column: "id".into(),
                },
                parents.iter().map(|&p| p as Value + 1).collect(),
            ),
        ];
        for spec in ATTRS.iter().filter(|a| a.table == child) {
            let values = parents
                .iter()
                .map(|&p| {
                    let u = if rng.gen::<f64>() < rho {
                        let noise = rng.gen_range(-CHILD_NOISE..CHILD_NOISE);
                        wrap(spec.freq * z[p] + spec.phase + noise)
                    } else {
                        rng.gen()
                    };
                    attr_value(spec, u)
                })
                .collect();
            cols.push(Column::new(spec.column, ColumnKind::Attribute, values));
        }
        tables.push(Table::new(child, cols)?);
    }

    Database::new(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_shape() {
        let db = generate_synthetic_db(&SynthConfig::small(100, 150), 1).unwrap();
        assert_eq!(db.tables().count(), 6);
        assert_eq!(db.fk_edges().len(), 5);
        assert!(db.fk_edges().iter().all(|e| e.parent_table == "title"));
        for t in db.tables() {
            let attrs = t.attribute_columns().count();
            if t.name() != "title" {
                assert!((1..=2).contains(&attrs), "{}", t.name());
            }
        }
        assert_eq!(db.table("title").unwrap().row_count(), 100);
        assert_eq!(db.table("cast_info").unwrap().row_count(), 150);
    }

    #[test]
    fn attribute_values_stay_in_domain() {
        let db = generate_synthetic_db(&SynthConfig::small(500, 500), 4).unwrap();
        for spec in &ATTRS {
            let s = db.stats(spec.table, spec.column).unwrap();
            assert!(s.min >= spec.lo && s.max <= spec.hi, "{}.{}", spec.table, spec.column);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_synthetic_db(&SynthConfig::small(10, 10).with_rho(1.5), 1).is_err());
        assert!(generate_synthetic_db(&SynthConfig::small(0, 10), 1).is_err());
    }

    #[test]
    fn parses_key_value_config() {
        let (cfg, seed) = SynthConfig::parse("# comment\nrows.title = 10\nrho=0.25\nseed = 9\n").unwrap();
        assert_eq!(cfg.rows["title"], 10);
        assert_eq!(cfg.rows["cast_info"], 200_000);
        assert_eq!(cfg.rho, 0.25);
        assert_eq!(seed, Some(9));
        assert!(SynthConfig::parse("rows.nope = 1").is_err());
        assert!(SynthConfig::parse("rho = x").is_err());
    }
}
