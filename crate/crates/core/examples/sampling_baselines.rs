//! Compares random sampling and index-based join sampling against the
//! true cardinality.

use mscn::evalkit::{run_eval, EvalOptions, IbjsEstimator, RsEstimator};
use mscn::executor::label_workload;
use mscn::query::generate_workload;
use mscn::storage::{generate_synthetic_db, IndexSet, SampleSet, SynthConfig};

fn main() -> mscn::Result<()> {
    let db = generate_synthetic_db(&SynthConfig::small(5_000, 10_000), 2)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    let indexes = IndexSet::for_join_keys(&db)?;
    let specs = generate_workload(&db, 500, 2, 9)?;
    let corpus = label_workload(&db, &specs, &samples, 1)?.queries;

    let rs = RsEstimator { db: &db, samples: &samples };
    let ibjs = IbjsEstimator { db: &db, samples: &samples, indexes: &indexes };
    for est in [&rs as &dyn mscn::evalkit::CardinalityEstimator, &ibjs] {
        let out = run_eval(est, &corpus, EvalOptions::default())?;
        for row in &out.rows {
            if let Some(r) = &row.report {
                println!(
                    "{:<5} joins={:<8} n={:<4} median {:>6.2} p95 {:>8.2} max {:>9.1}",
                    row.estimator, row.group_label(), row.n, r.median, r.p95, r.max
                );
            }
        }
    }
    Ok(())
}
