//! Trains a bitmap MSCN on a synthetic database and compares it with
//! random sampling on held-out queries.
//!
//! cargo run --release --example train_mscn -- [train_queries] [epochs]

use std::time::Instant;

use mscn::evalkit::{run_eval, EvalOptions, MscnEstimator, RsEstimator};
use mscn::executor::label_workload;
use mscn::featurizer::SampleMode;
use mscn::model::{train_on_corpus, Hyperparams};
use mscn::query::generate_workload;
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> mscn::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n_train = args.first().copied().unwrap_or(10_000);
    let epochs = args.get(1).copied().unwrap_or(100);

    let t = Instant::now();
    let db = generate_synthetic_db(&SynthConfig::default(), 42)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    println!("database ready in {:.1?}", t.elapsed());

    let t = Instant::now();
    let specs = generate_workload(&db, (n_train + 1000) * 14 / 10, 2, 1)?;
    let labeled = label_workload(&db, &specs, &samples, 1)?;
    println!(
        "labeled {} queries ({} empty dropped) in {:.1?}",
        labeled.queries.len(),
        labeled.dropped_empty,
        t.elapsed()
    );
    let (train, test) = labeled.queries.split_at(n_train);
    let test = &test[..1000.min(test.len())];

    let t = Instant::now();
    let hp = Hyperparams {
        epochs,
        seed: 1,
        ..Hyperparams::default()
    };
    let out = train_on_corpus(&db, train, SampleMode::Bitmap, &hp)?;
    println!("trained {} epochs in {:.1?}", epochs, t.elapsed());
    for rec in out.history.iter().filter(|r| r.epoch % 10 == 0 || r.epoch == 1) {
        println!(
            "  epoch {:>3}  train loss {:>8.3}  val mean q-error {:>8.3}",
            rec.epoch, rec.train_loss, rec.val_mean_qerror
        );
    }

    let mscn = run_eval(&MscnEstimator::new(&out.model), test, EvalOptions::default())?;
    let rs = run_eval(&RsEstimator { db: &db, samples: &samples }, test, EvalOptions::default())?;
    for o in [&mscn, &rs] {
        for row in &o.rows {
            if let Some(r) = &row.report {
                println!(
                    "{:<12} joins={:<8} n={:<5} median {:>7.2}  p95 {:>9.2}  max {:>11.1}  mean {:>9.2}",
                    row.estimator,
                    row.group_label(),
                    row.n,
                    r.median,
                    r.p95,
                    r.max,
                    r.mean
                );
            }
        }
    }
    Ok(())
}
