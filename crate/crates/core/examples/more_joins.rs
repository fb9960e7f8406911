//! Trains on queries with up to two joins and evaluates on three and four
//! joins, next to random sampling.

use mscn::evalkit::{run_eval, EvalOptions, MscnEstimator, RsEstimator};
use mscn::executor::label_workload;
use mscn::featurizer::SampleMode;
use mscn::model::{train_on_corpus, Hyperparams};
use mscn::query::generate_workload;
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> mscn::Result<()> {
    let db = generate_synthetic_db(&SynthConfig::default(), 42)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    let train = label_workload(&db, &generate_workload(&db, 8_000, 2, 1)?, &samples, 1)?.queries;
    let hp = Hyperparams { d: 64, epochs: 60, seed: 1, ..Hyperparams::default() };
    let model = train_on_corpus(&db, &train, SampleMode::Bitmap, &hp)?.model;

    let test: Vec<_> = label_workload(&db, &generate_workload(&db, 600, 4, 33)?, &samples, 1)?
        .queries
        .into_iter()
        .filter(|q| q.spec.join_count() >= 3)
        .collect();
    let m = run_eval(&MscnEstimator::new(&model), &test, EvalOptions::default())?;
    let r = run_eval(&RsEstimator { db: &db, samples: &samples }, &test, EvalOptions::default())?;
    for j in 3..=4 {
        for o in [&m, &r] {
            if let Some(row) = o.for_join_count(j) {
                let rep = row.report.as_ref().unwrap();
                println!("joins={j} {:<12} n={:<4} median {:>6.2} p95 {:>9.2}", row.estimator, row.n, rep.median, rep.p95);
            }
        }
    }
    Ok(())
}
