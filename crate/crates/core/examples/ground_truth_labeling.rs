//! Executes a workload to get exact cardinalities and writes a labeled
//! corpus with its bitmap sidecar.

use mscn::executor::{bitmap_sidecar, label_workload, read_labeled_corpus, write_labeled_corpus};
use mscn::query::{format_query, generate_workload};
use mscn::storage::{generate_synthetic_db, SampleSet, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let db = generate_synthetic_db(&SynthConfig::small(2_000, 6_000), 1)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    let specs = generate_workload(&db, 200, 2, 5)?;
    let out = label_workload(&db, &specs, &samples, 1)?;
    println!("{} labeled, {} empty results dropped", out.queries.len(), out.dropped_empty);
    for q in out.queries.iter().take(5) {
        println!("{}", format_query(&q.spec, Some(q.true_cardinality)));
    }

    let dir = std::env::temp_dir().join("mscn_labeling_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("corpus.txt");
    write_labeled_corpus(&path, &out.queries)?;
    let back = read_labeled_corpus(&path, &db)?;
    println!(
        "wrote {} and {}; read back {} queries",
        path.display(),
        bitmap_sidecar(&path).display(),
        back.queries.len()
    );
    Ok(())
}
