//! q-error metrics, percentile reports and evaluation drivers.
//!
//! Percentiles use linear interpolation between order statistics: for `n`
//! sorted values and fraction `p`, position `h = (n - 1)·p`, result
//! `x[⌊h⌋] + (h - ⌊h⌋)·(x[⌊h⌋+1] - x[⌊h⌋])`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ibjs_estimate, rs_estimate};
use crate::executor::LabeledQuery;
use crate::featurizer::{EncodingCatalog, FeaturizedQuery};
use crate::model::{train, Hyperparams, MscnModel};
use crate::storage::{Database, IndexSet, SampleSet};
use crate::{Error, Result};

pub fn qerror(estimate: f64, truth: f64) -> Result<f64> {
    if !(estimate > 0.0 && truth > 0.0) || !estimate.is_finite() || !truth.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "q-error needs positive finite inputs, got estimate {estimate} and truth {truth}"
        )));
    }
    Ok((estimate / truth).max(truth / estimate))
}

/// Type-7 percentile of already sorted values; `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QErrorReport {
    pub n: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn report(errors: &[f64]) -> Result<QErrorReport> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("cannot report on an empty error list".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    // summing in sorted order keeps the mean independent of input order
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(QErrorReport {
        n: sorted.len(),
        median: percentile(&sorted, 0.5),
        p25: percentile(&sorted, 0.25),
        p75: percentile(&sorted, 0.75),
        p90: percentile(&sorted, 0.90),
        p95: percentile(&sorted, 0.95),
        p99: percentile(&sorted, 0.99),
        max: sorted[sorted.len() - 1],
        mean,
    })
}

pub trait CardinalityEstimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, query: &LabeledQuery) -> Result<f64>;
}

pub struct MscnEstimator<'a> {
    pub model: &'a MscnModel,
    pub label: String,
}

impl<'a> MscnEstimator<'a> {
    pub fn new(model: &'a MscnModel) -> Self {
        MscnEstimator {
            model,
            label: format!("mscn-{}", model.catalog.sample_mode.name()),
        }
    }
}

impl CardinalityEstimator for MscnEstimator<'_> {
    fn name(&self) -> &str {
        &self.label
    }

    fn estimate(&self, query: &LabeledQuery) -> Result<f64> {
        self.model.predict_labeled(query)
    }
}

pub struct RsEstimator<'a> {
    pub db: &'a Database,
    pub samples: &'a SampleSet,
}

impl CardinalityEstimator for RsEstimator<'_> {
    fn name(&self) -> &str {
        "rs"
    }

    fn estimate(&self, query: &LabeledQuery) -> Result<f64> {
        rs_estimate(self.db, self.samples, &query.spec)
    }
}

pub struct IbjsEstimator<'a> {
    pub db: &'a Database,
    pub samples: &'a SampleSet,
    pub indexes: &'a IndexSet,
}

impl CardinalityEstimator for IbjsEstimator<'_> {
    fn name(&self) -> &str {
        "ibjs"
    }

    fn estimate(&self, query: &LabeledQuery) -> Result<f64> {
        ibjs_estimate(self.db, self.samples, self.indexes, &query.spec)
    }
}

/// Returns the true cardinality; handy as a sanity estimator.
pub struct TruthEstimator;

impl CardinalityEstimator for TruthEstimator {
    fn name(&self) -> &str {
        "truth"
    }

    fn estimate(&self, query: &LabeledQuery) -> Result<f64> {
        Ok(query.true_cardinality as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub zero_tuple_only: bool,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub join_count: usize,
    pub estimate: f64,
    pub truth: u64,
    pub qerror: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub estimator: String,
    /// `None` is the overall row
    pub join_count: Option<usize>,
    pub n: usize,
    pub report: Option<QErrorReport>,
}

impl EvalRow {
    pub fn group_label(&self) -> String {
        self.join_count.map_or_else(|| "overall".to_string(), |j| j.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub rows: Vec<EvalRow>,
    pub points: Vec<EvalPoint>,
}

impl EvalOutcome {
    pub fn overall(&self) -> &EvalRow {
        self.rows.last().expect("overall row is always present")
    }

    pub fn for_join_count(&self, j: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.join_count == Some(j))
    }
}

/// Evaluates `estimator` on every query (or only the 0-tuple subset) and
/// reports q-errors per join count plus an overall row, in that order.
pub fn run_eval(
    estimator: &dyn CardinalityEstimator,
    workload: &[LabeledQuery],
    options: EvalOptions,
) -> Result<EvalOutcome> {
    let selected: Vec<&LabeledQuery> = workload
        .iter()
        .filter(|q| !options.zero_tuple_only || q.is_zero_tuple())
        .collect();
    let point = |q: &&LabeledQuery| -> Result<EvalPoint> {
        let truth = q.true_cardinality;
        let estimate = estimator.estimate(q)?;
        Ok(EvalPoint {
            join_count: q.spec.join_count(),
            estimate,
            truth,
            qerror: qerror(estimate, truth as f64)?,
        })
    };
    let points: Vec<EvalPoint> = if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| selected.par_iter().map(point).collect::<Result<Vec<_>>>())?
    } else {
        selected.iter().map(point).collect::<Result<Vec<_>>>()?
    };

    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for p in &points {
        groups.entry(p.join_count).or_default().push(p.qerror);
    }
    let name = estimator.name().to_string();
    let mut rows: Vec<EvalRow> = groups
        .iter()
        .map(|(&j, errs)| {
            Ok(EvalRow {
                estimator: name.clone(),
                join_count: Some(j),
                n: errs.len(),
                report: Some(report(errs)?),
            })
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = points.iter().map(|p| p.qerror).collect();
    rows.push(EvalRow {
        estimator: name,
        join_count: None,
        n: all.len(),
        report: if all.is_empty() { None } else { Some(report(&all)?) },
    });
    Ok(EvalOutcome { rows, points })
}

pub const REPORT_HEADER: &str = "estimator,join_count,n,median,p25,p75,p90,p95,p99,max,mean";

pub fn write_report_csv(rows: &[EvalRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        write!(out, "{},{},{}", r.estimator, r.group_label(), r.n)?;
        match &r.report {
            Some(q) => writeln!(
                out,
                ",{},{},{},{},{},{},{},{}",
                q.median, q.p25, q.p75, q.p90, q.p95, q.p99, q.max, q.mean
            )?,
            None => writeln!(out, ",,,,,,,,")?,
        }
    }
    Ok(())
}

/// JSON array with the same fields as the CSV; an empty subset has nulls.
pub fn report_json(rows: &[EvalRow]) -> Result<String> {
    let items: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let q = r.report.as_ref();
            let f = |g: fn(&QErrorReport) -> f64| q.map(g);
            serde_json::json!({
                "estimator": r.estimator,
                "join_count": r.group_label(),
                "n": r.n,
                "median": f(|q| q.median),
                "p25": f(|q| q.p25),
                "p75": f(|q| q.p75),
                "p90": f(|q| q.p90),
                "p95": f(|q| q.p95),
                "p99": f(|q| q.p99),
                "max": f(|q| q.max),
                "mean": f(|q| q.mean),
            })
        })
        .collect();
    Ok(serde_json::to_string_pretty(&items)?)
}

/// One line per query, for box plots.
pub fn write_boxplot_csv(estimator: &str, points: &[EvalPoint], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "estimator,join_count,estimate,truth,qerror")?;
    for p in points {
        writeln!(out, "{estimator},{},{},{},{}", p.join_count, p.estimate, p.truth, p.qerror)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpace {
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub d: Vec<usize>,
}

impl GridSpace {
    /// Reads `key = v1, v2, ...` lines for `epochs`, `batch_size` and `d`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut space = GridSpace {
            epochs: Vec::new(),
            batch_size: Vec::new(),
            d: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("grid line {}: expected key = values", i + 1)))?;
            let values = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("grid line {}: bad value {v:?}", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            match key.trim() {
                "epochs" => space.epochs = values,
                "batch_size" | "batch" => space.batch_size = values,
                "d" => space.d = values,
                other => return Err(Error::Parse(format!("grid line {}: unknown key {other:?}", i + 1))),
            }
        }
        Ok(space)
    }

    pub fn configurations(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &e in &self.epochs {
            for &b in &self.batch_size {
                for &d in &self.d {
                    out.push((e, b, d));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub epochs: usize,
    pub batch_size: usize,
    pub d: usize,
    pub seeds: Vec<u64>,
    pub val_mean_qerrors: Vec<f64>,
    pub mean: f64,
}

/// Trains `repeats` models per configuration, each with its own seed drawn
/// from `base.seed`, and ranks configurations by the average final
/// validation mean q-error (best first).
pub fn grid_search(
    space: &GridSpace,
    base: &Hyperparams,
    catalog: &EncodingCatalog,
    train_set: &[FeaturizedQuery],
    val_set: &[FeaturizedQuery],
    repeats: usize,
) -> Result<Vec<GridResult>> {
    let configs = space.configurations();
    if configs.is_empty() || repeats == 0 {
        return Err(Error::InvalidArgument("grid search needs at least one configuration and repeat".into()));
    }
    if val_set.is_empty() {
        return Err(Error::InvalidArgument("grid search needs a validation set".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(base.seed);
    let mut results = Vec::with_capacity(configs.len());
    for (epochs, batch_size, d) in configs {
        let mut result = GridResult {
            epochs,
            batch_size,
            d,
            seeds: Vec::new(),
            val_mean_qerrors: Vec::new(),
            mean: 0.0,
        };
        for _ in 0..repeats {
            let seed = seeds.gen::<u64>();
            let hp = Hyperparams {
                epochs,
                batch_size,
                d,
                seed,
                ..base.clone()
            };
            let out = train(catalog.clone(), train_set, val_set, &hp)?;
            result.seeds.push(seed);
            result
                .val_mean_qerrors
                .push(out.history.last().expect("epochs >= 1").val_mean_qerror);
        }
        result.mean = result.val_mean_qerrors.iter().sum::<f64>() / repeats as f64;
        results.push(result);
    }
    results.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(results)
}

pub const GRID_HEADER: &str = "rank,epochs,batch_size,d,mean_val_qerror,runs";

pub fn write_grid_csv(results: &[GridResult], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{GRID_HEADER}")?;
    for (i, r) in results.iter().enumerate() {
        let runs: Vec<String> = r.val_mean_qerrors.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{},{},{},{}", i + 1, r.epochs, r.batch_size, r.d, r.mean, runs.join(";"))?;
    }
    Ok(())
}
