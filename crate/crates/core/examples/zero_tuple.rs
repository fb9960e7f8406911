//! Queries whose predicates match no sampled row: random sampling has to
//! guess, the bitmap model still sees the predicates.

use mscn::evalkit::{run_eval, EvalOptions, MscnEstimator, RsEstimator};
use mscn::executor::label_workload;
use mscn::featurizer::SampleMode;
use mscn::model::{train_on_corpus, Hyperparams};
use mscn::query::generate_workload;
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> mscn::Result<()> {
    let db = generate_synthetic_db(&SynthConfig::default(), 42)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    let specs = generate_workload(&db, 8_000, 2, 1)?;
    let corpus = label_workload(&db, &specs, &samples, 1)?.queries;
    let (train, test) = corpus.split_at(corpus.len() - 500);

    let hp = Hyperparams { d: 64, epochs: 60, seed: 1, ..Hyperparams::default() };
    let model = train_on_corpus(&db, train, SampleMode::Bitmap, &hp)?.model;
    let opts = EvalOptions { zero_tuple_only: true, threads: 1 };
    let m = run_eval(&MscnEstimator::new(&model), test, opts)?;
    let r = run_eval(&RsEstimator { db: &db, samples: &samples }, test, opts)?;
    println!("{} zero-tuple queries in the test set", m.overall().n);
    for o in [&m, &r] {
        if let Some(rep) = &o.overall().report {
            println!("{:<12} median {:>7.2} p95 {:>9.2} mean {:>8.2}", o.overall().estimator, rep.median, rep.p95, rep.mean);
        }
    }
    Ok(())
}
