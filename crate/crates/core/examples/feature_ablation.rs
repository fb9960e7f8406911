//! Trains one model per sample featurization (none, count, bitmap) and
//! compares their held-out mean q-error.

use mscn::evalkit::{run_eval, EvalOptions, MscnEstimator};
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
    for mode in [SampleMode::None, SampleMode::Count, SampleMode::Bitmap] {
        let model = train_on_corpus(&db, train, mode, &hp)?.model;
        let out = run_eval(&MscnEstimator::new(&model), test, EvalOptions::default())?;
        let r = out.overall().report.clone().unwrap();
        println!("{:<7} median {:>6.2} p95 {:>8.2} mean {:>7.2}", mode.name(), r.median, r.p95, r.mean);
    }
    Ok(())
}
