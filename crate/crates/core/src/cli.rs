//! The `mscn` command line tool.
//!
//! ```text
//! mscn synth-db     --out DIR [--config FILE] [--rows.<table> N]... [--rho R] [--seed K]
//! mscn sample       --db DIR --size S --seed K --out FILE
//! mscn gen-workload --db DIR --n N --max-joins J --seed K --out FILE
//! mscn label        --db DIR --workload FILE --samples FILE --out FILE [--threads N]
//! mscn train        --corpus FILE --db DIR --mode none|count|bitmap --out MODEL [...]
//! mscn eval         (--model MODEL | --baseline rs|ibjs) --workload FILE --db DIR
//!                   --samples FILE --report FILE [--zero-tuple-only] [--boxplot FILE]
//! mscn predict      --model MODEL --query "..." --db DIR [--samples FILE]
//! mscn tune         --grid FILE --corpus FILE --db DIR --out FILE [...]
//! ```
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::evalkit::{
    grid_search, report_json, run_eval, write_boxplot_csv, write_grid_csv, write_report_csv, CardinalityEstimator,
    EvalOptions, GridSpace, IbjsEstimator, MscnEstimator, RsEstimator,
};
use crate::executor::{label_workload, read_labeled_corpus, sample_bitmaps, write_labeled_corpus, LabeledQuery};
use crate::featurizer::{build_catalog, featurize, SampleMode};
use crate::model::{load_model, predict, save_model, split_train_validation, train_on_corpus, Hyperparams, LossKind};
use crate::query::{generate_workload, parse_query, read_workload, write_workload};
use crate::storage::{generate_synthetic_db, load_dir, save_dir, Database, IndexSet, SampleSet, SynthConfig};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "mscn", version, about = "Learned cardinality estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a correlated synthetic database as CSV files
    SynthDb(SynthDbArgs),
    /// Draw materialized samples
    Sample(SampleArgs),
    /// Generate a random workload of unique queries
    GenWorkload(GenArgs),
    /// Compute true cardinalities and sample bitmaps
    Label(LabelArgs),
    /// Train a model on a labeled corpus
    Train(TrainArgs),
    /// Evaluate a model or a baseline on a labeled workload
    Eval(EvalArgs),
    /// Estimate one query
    Predict(PredictArgs),
    /// Grid search over epochs, batch size and hidden width
    Tune(TuneArgs),
}

#[derive(Args, Debug)]
struct SynthDbArgs {
    #[arg(long)]
    out: PathBuf,
    /// key = value file with rows.<table>, rho and seed
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "rows.title")]
    rows_title: Option<usize>,
    #[arg(long = "rows.movie_companies")]
    rows_movie_companies: Option<usize>,
    #[arg(long = "rows.movie_info")]
    rows_movie_info: Option<usize>,
    #[arg(long = "rows.movie_info_idx")]
    rows_movie_info_idx: Option<usize>,
    #[arg(long = "rows.movie_keyword")]
    rows_movie_keyword: Option<usize>,
    #[arg(long = "rows.cast_info")]
    rows_cast_info: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value_t = 1000)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    max_joins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    None,
    Count,
    Bitmap,
}

impl From<ModeArg> for SampleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => SampleMode::None,
            ModeArg::Count => SampleMode::Count,
            ModeArg::Bitmap => SampleMode::Bitmap,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Qerr,
    Mse,
    Gqerr,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Qerr => LossKind::MeanQError,
            LossArg::Mse => LossKind::Mse,
            LossArg::Gqerr => LossKind::GeometricQError,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Bitmap)]
    mode: ModeArg,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Qerr)]
    loss: LossArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// per-epoch history CSV (default: MODEL.history.csv)
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    Rs,
    Ibjs,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("estimator").required(true).args(["model", "baseline"])))]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    zero_tuple_only: bool,
    /// CSV report, or JSON when the name ends in .json
    #[arg(long)]
    report: PathBuf,
    /// per-query CSV for box plots
    #[arg(long)]
    boxplot: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// lines `epochs = ...`, `batch_size = ...`, `d = ...`
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Bitmap)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Qerr)]
    loss: LossArg,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the tool on `argv` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthDb(a) => synth_db(a),
        Command::Sample(a) => sample(a),
        Command::GenWorkload(a) => gen_workload(a),
        Command::Label(a) => label(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Tune(a) => tune(a),
    }
}

fn synth_db(a: SynthDbArgs) -> Result<()> {
    let (mut cfg, mut seed) = match &a.config {
        Some(p) => SynthConfig::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => (SynthConfig::default(), None),
    };
    let overrides = [
        ("title", a.rows_title),
        ("movie_companies", a.rows_movie_companies),
        ("movie_info", a.rows_movie_info),
        ("movie_info_idx", a.rows_movie_info_idx),
        ("movie_keyword", a.rows_movie_keyword),
        ("cast_info", a.rows_cast_info),
    ];
    for (table, n) in overrides {
        if let Some(n) = n {
            cfg.rows.insert(table.to_string(), n);
        }
    }
    if let Some(r) = a.rho {
        cfg.rho = r;
    }
    if a.seed.is_some() {
        seed = a.seed;
    }
    let db = generate_synthetic_db(&cfg, seed.unwrap_or(0))?;
    save_dir(&db, &a.out)?;
    for t in db.tables() {
        println!("{}: {} rows", t.name(), t.row_count());
    }
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    SampleSet::draw(&db, a.size, a.seed)?.save(&a.out)
}

fn gen_workload(a: GenArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    let w = generate_workload(&db, a.n, a.max_joins, a.seed)?;
    write_workload(&a.out, w.iter().map(|q| (q, None)))?;
    println!("{} queries written to {}", w.len(), a.out.display());
    Ok(())
}

fn label(a: LabelArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    let samples = SampleSet::load(&a.samples, &db)?;
    let specs: Vec<_> = read_workload(&a.workload, &db)?.into_iter().map(|(q, _)| q).collect();
    let out = label_workload(&db, &specs, &samples, a.threads)?;
    write_labeled_corpus(&a.out, &out.queries)?;
    println!("labeled {} queries, dropped {} empty", out.queries.len(), out.dropped_empty);
    Ok(())
}

fn hyperparams(d: usize, epochs: usize, batch: usize, lr: f64, loss: LossArg, seed: u64) -> Hyperparams {
    Hyperparams {
        d,
        epochs,
        batch_size: batch,
        lr,
        loss: loss.into(),
        seed,
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    let corpus = read_labeled_corpus(&a.corpus, &db)?;
    let hp = hyperparams(a.d, a.epochs, a.batch, a.lr, a.loss, a.seed);
    let out = train_on_corpus(&db, &corpus.queries, a.mode.into(), &hp)?;
    save_model(&out.model, &a.out)?;

    let history = a.history.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    let mut text = String::from("epoch,train_loss,val_mean_qerror\n");
    for r in &out.history {
        text.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_mean_qerror));
        println!("epoch {:>4}  train loss {:.4}  val mean q-error {:.4}", r.epoch, r.train_loss, r.val_mean_qerror);
    }
    fs::write(&history, text).map_err(|e| Error::io(&history, e))?;
    println!(
        "trained on {} queries ({} validation), model written to {}",
        out.train_size,
        out.val_size,
        a.out.display()
    );
    Ok(())
}

/// Reads a labeled workload and recomputes its bitmaps on `samples`.
/// Queries without a positive label are rejected.
fn labeled_workload(path: &Path, db: &Database, samples: &SampleSet) -> Result<Vec<LabeledQuery>> {
    read_workload(path, db)?
        .into_iter()
        .enumerate()
        .map(|(i, (spec, label))| {
            let c = label.filter(|&c| c > 0).ok_or_else(|| {
                Error::Parse(format!("{}: query {} has no positive cardinality label", path.display(), i + 1))
            })?;
            let bitmaps = sample_bitmaps(&spec, samples)?;
            Ok(LabeledQuery {
                spec,
                true_cardinality: c,
                bitmaps,
            })
        })
        .collect()
}

fn write_text(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn eval(a: EvalArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    let samples = SampleSet::load(&a.samples, &db)?;
    let workload = labeled_workload(&a.workload, &db, &samples)?;
    let options = EvalOptions {
        zero_tuple_only: a.zero_tuple_only,
        threads: a.threads,
    };
    let model;
    let indexes;
    let estimator: Box<dyn CardinalityEstimator> = match (&a.model, a.baseline) {
        (Some(path), _) => {
            model = load_model(path)?;
            if model.catalog.sample_mode != SampleMode::None && samples.uniform_size() != Some(model.catalog.sample_size) {
                return Err(Error::InvalidArgument(format!(
                    "model expects {} sampled rows per table, sample file has {:?}",
                    model.catalog.sample_size,
                    samples.uniform_size()
                )));
            }
            Box::new(MscnEstimator::new(&model))
        }
        (None, Some(BaselineArg::Rs)) => Box::new(RsEstimator {
            db: &db,
            samples: &samples,
        }),
        (None, Some(BaselineArg::Ibjs)) => {
            indexes = IndexSet::for_join_keys(&db)?;
            Box::new(IbjsEstimator {
                db: &db,
                samples: &samples,
                indexes: &indexes,
            })
        }
        (None, None) => unreachable!("clap requires an estimator"),
    };
    let out = run_eval(estimator.as_ref(), &workload, options)?;

    if a.report.extension().is_some_and(|e| e == "json") {
        let json = report_json(&out.rows)? + "\n";
        fs::write(&a.report, json).map_err(|e| Error::io(&a.report, e))?;
    } else {
        write_text(&a.report, |b| write_report_csv(&out.rows, b))?;
    }
    if let Some(path) = &a.boxplot {
        write_text(path, |b| write_boxplot_csv(estimator.name(), &out.points, b))?;
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_report_csv(&out.rows, &mut lock).map_err(|e| Error::io("<stdout>", e))?;
    lock.flush().map_err(|e| Error::io("<stdout>", e))
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    let model = load_model(&a.model)?;
    let samples = a.samples.as_ref().map(|p| SampleSet::load(p, &db)).transpose()?;
    let (spec, _) = parse_query(&a.query, &db)?;
    let c = predict(&model, &spec, &db, samples.as_ref())?;
    println!("{c}");
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let db = load_dir(&a.db)?;
    let space = GridSpace::parse(&fs::read_to_string(&a.grid).map_err(|e| Error::io(&a.grid, e))?)?;
    let corpus = read_labeled_corpus(&a.corpus, &db)?;
    let labels: Vec<u64> = corpus.queries.iter().map(|q| q.true_cardinality).collect();
    let catalog = build_catalog(&db, &labels, corpus.sample_size, a.mode.into())?;
    let features = corpus
        .queries
        .iter()
        .map(|q| featurize(q, &catalog))
        .collect::<Result<Vec<_>>>()?;
    let (tr, va) = split_train_validation(features.len(), a.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>();
    let base = hyperparams(1, 1, 1, a.lr, a.loss, a.seed);
    let results = grid_search(&space, &base, &catalog, &pick(&tr), &pick(&va), a.repeats)?;
    write_text(&a.out, |b| write_grid_csv(&results, b))?;
    for (i, r) in results.iter().enumerate() {
        println!(
            "#{:<3} epochs={:<4} batch={:<5} d={:<4} mean val q-error {:.4}",
            i + 1,
            r.epochs,
            r.batch_size,
            r.d,
            r.mean
        );
    }
    Ok(())
}
