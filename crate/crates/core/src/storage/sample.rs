use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Database, Table, Value};
use crate::{Error, Result};

/// A fixed uniform sample (without replacement) of a table's rows.
/// Position `i` of every column corresponds to table row `row_indices[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaterializedSample {
    pub table: String,
    pub seed: u64,
    pub row_indices: Vec<usize>,
    columns: Vec<(String, Vec<Value>)>,
}

impl MaterializedSample {
    pub fn size(&self) -> usize {
        self.row_indices.len()
    }

    pub fn column(&self, name: &str) -> Option<&[Value]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    fn from_indices(table: &Table, seed: u64, row_indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = row_indices.iter().find(|&&i| i >= table.row_count()) {
            return Err(Error::InvalidArgument(format!(
                "sample index {bad} out of range for table {} ({} rows)",
                table.name(),
                table.row_count()
            )));
        }
        let columns = table
            .columns()
            .iter()
            .map(|c| (c.name.clone(), row_indices.iter().map(|&i| c.values[i]).collect()))
            .collect();
        Ok(MaterializedSample {
            table: table.name().to_string(),
            seed,
            row_indices,
            columns,
        })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn sample_rng(table: &str, size: usize, seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&fnv1a(table.as_bytes()).to_le_bytes());
    key[8..16].copy_from_slice(&(size as u64).to_le_bytes());
    key[16..24].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws `size` distinct rows uniformly at random. The result depends only
/// on the table name, `size` and `seed`.
pub fn draw_sample(table: &Table, size: usize, seed: u64) -> Result<MaterializedSample> {
    if size == 0 || size > table.row_count() {
        return Err(Error::InvalidArgument(format!(
            "sample size {size} outside 1..={} for table {}",
            table.row_count(),
            table.name()
        )));
    }
    let mut rng = sample_rng(table.name(), size, seed);
    let indices = rand::seq::index::sample(&mut rng, table.row_count(), size).into_vec();
    MaterializedSample::from_indices(table, seed, indices)
}

/// One materialized sample per table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    seed: u64,
    samples: BTreeMap<String, MaterializedSample>,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    seed: u64,
    tables: BTreeMap<String, Vec<usize>>,
}

impl SampleSet {
    pub fn draw(db: &Database, size: usize, seed: u64) -> Result<Self> {
        let samples = db
            .tables()
            .map(|t| Ok((t.name().to_string(), draw_sample(t, size, seed)?)))
            .collect::<Result<_>>()?;
        Ok(SampleSet { seed, samples })
    }

    /// Every row of every table, in table order. Sampling-based estimators
    /// become exact on such a "sample".
    pub fn full(db: &Database) -> Result<Self> {
        let samples = db
            .tables()
            .map(|t| {
                let s = MaterializedSample::from_indices(t, 0, (0..t.row_count()).collect())?;
                Ok((t.name().to_string(), s))
            })
            .collect::<Result<_>>()?;
        Ok(SampleSet { seed: 0, samples })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, table: &str) -> Result<&MaterializedSample> {
        self.samples
            .get(table)
            .ok_or_else(|| Error::MissingSample(table.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &MaterializedSample> {
        self.samples.values()
    }

    /// The common sample size, if every table was sampled with the same size.
    pub fn uniform_size(&self) -> Option<usize> {
        let mut sizes = self.samples.values().map(MaterializedSample::size);
        let first = sizes.next()?;
        sizes.all(|s| s == first).then_some(first)
    }

    /// Writes the sampled row indices as JSON; rows are re-materialized from
    /// the database on load.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = SampleFile {
            seed: self.seed,
            tables: self
                .samples
                .iter()
                .map(|(k, s)| (k.clone(), s.row_indices.clone()))
                .collect(),
        };
        let text = serde_json::to_string(&file)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, db: &Database) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SampleFile = serde_json::from_str(&text)?;
        let samples = file
            .tables
            .into_iter()
            .map(|(name, idx)| {
                let t = db
                    .table(&name)
                    .ok_or_else(|| Error::Schema(format!("sample file names unknown table {name}")))?;
                Ok((name, MaterializedSample::from_indices(t, file.seed, idx)?))
            })
            .collect::<Result<_>>()?;
        Ok(SampleSet {
            seed: file.seed,
            samples,
        })
    }
}
