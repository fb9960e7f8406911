//! Saves a trained model, loads it back and checks that predictions match
//! bit for bit.

use mscn::executor::label_workload;
use mscn::featurizer::SampleMode;
use mscn::model::{load_model, predict, save_model, train_on_corpus, Hyperparams};
use mscn::query::{generate_workload, parse_query};
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let db = generate_synthetic_db(&SynthConfig::small(2_000, 6_000), 1)?;
    let samples = SampleSet::draw(&db, 50, 7)?;
    let corpus = label_workload(&db, &generate_workload(&db, 800, 2, 1)?, &samples, 1)?.queries;
    let hp = Hyperparams { d: 16, epochs: 5, seed: 1, ..Hyperparams::default() };
    let model = train_on_corpus(&db, &corpus, SampleMode::Bitmap, &hp)?.model;

    let path = std::env::temp_dir().join("mscn_example_model.bin");
    save_model(&model, &path)?;
    let loaded = load_model(&path)?;
    println!("{} parameters, {} bytes on disk", loaded.param_count(), std::fs::metadata(&path)?.len());

    let (q, _) = parse_query("title t,movie_keyword mk#mk.movie_id=t.id#t.production_year,<,1990#", &db)?;
    let a = predict(&model, &q, &db, Some(&samples))?;
    let b = predict(&loaded, &q, &db, Some(&samples))?;
    assert_eq!(a.to_bits(), b.to_bits());
    println!("estimate {a:.1} (identical after reload)");
    Ok(())
}
