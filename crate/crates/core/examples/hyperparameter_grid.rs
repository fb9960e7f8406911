//! Ranks a small grid of (epochs, batch size, hidden width) settings by
//! validation mean q-error.

use mscn::evalkit::{grid_search, write_grid_csv, GridSpace};
use mscn::executor::label_workload;
use mscn::featurizer::{build_catalog, featurize, SampleMode};
use mscn::model::{split_train_validation, Hyperparams};
use mscn::query::generate_workload;
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let db = generate_synthetic_db(&SynthConfig::small(5_000, 10_000), 42)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    let corpus = label_workload(&db, &generate_workload(&db, 1_500, 2, 1)?, &samples, 1)?.queries;

    let labels: Vec<u64> = corpus.iter().map(|q| q.true_cardinality).collect();
    let catalog = build_catalog(&db, &labels, 100, SampleMode::Bitmap)?;
    let (tr, va) = split_train_validation(corpus.len(), 0);
    let feat = |ix: &[usize]| ix.iter().map(|&i| featurize(&corpus[i], &catalog)).collect::<mscn::Result<Vec<_>>>();
    let (train, val) = (feat(&tr)?, feat(&va)?);

    let space = GridSpace::parse("epochs = 5, 15\nbatch_size = 64, 256\nd = 16, 32\n")?;
    let results = grid_search(&space, &Hyperparams { seed: 3, ..Hyperparams::default() }, &catalog, &train, &val, 2)?;
    write_grid_csv(&results, &mut std::io::stdout())?;
    Ok(())
}
