//! Trains the same model under the three training objectives and compares
//! held-out q-errors.

use mscn::evalkit::{run_eval, EvalOptions, MscnEstimator};
use mscn::executor::label_workload;
use mscn::featurizer::SampleMode;
use mscn::model::{train_on_corpus, Hyperparams, LossKind};
use mscn::query::generate_workload;
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> mscn::Result<()> {
    let db = generate_synthetic_db(&SynthConfig::small(5_000, 10_000), 42)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    let corpus = label_workload(&db, &generate_workload(&db, 2_500, 2, 1)?, &samples, 1)?.queries;
    let (train, test) = corpus.split_at(corpus.len() - 400);

    for loss in [LossKind::MeanQError, LossKind::GeometricQError, LossKind::Mse] {
        let hp = Hyperparams { d: 32, epochs: 25, loss, seed: 1, ..Hyperparams::default() };
        let model = train_on_corpus(&db, train, SampleMode::Bitmap, &hp)?.model;
        let r = run_eval(&MscnEstimator::new(&model), test, EvalOptions::default())?
            .overall()
            .report
            .clone()
            .unwrap();
        println!("{:<6} median {:>6.2} p95 {:>8.2} mean {:>7.2}", loss.flag(), r.median, r.p95, r.mean);
    }
    Ok(())
}
