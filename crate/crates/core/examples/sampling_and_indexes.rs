//! Draws materialized samples, evaluates predicates on them and probes the
//! foreign-key hash indexes.

use mscn::executor::eval_predicates_on_sample;
use mscn::query::{parse_query, Predicate};
use mscn::storage::{generate_synthetic_db, IndexSet, SampleSet, SynthConfig};

fn main() -> mscn::Result<()> {
    let db = generate_synthetic_db(&SynthConfig::small(2_000, 6_000), 1)?;
    let samples = SampleSet::draw(&db, 100, 7)?;
    for s in samples.iter() {
        println!("{:<16} sample of {}", s.table, s.size());
    }

    let (q, _) = parse_query("title t##t.production_year,>,2000,t.kind_id,=,1#", &db)?;
    let preds: Vec<&Predicate> = q.predicates.iter().collect();
    let bm = eval_predicates_on_sample(samples.get("title")?, &preds)?;
    println!("{} of {} sampled titles qualify (bitmap {})", bm.count_ones(), bm.len(), bm.to_hex());

    let indexes = IndexSet::for_join_keys(&db)?;
    let ix = indexes.get("cast_info", "movie_id")?;
    let movie = db.table("cast_info").unwrap().column("movie_id").unwrap().values[0];
    println!(
        "cast_info.movie_id: {} distinct keys, movie {movie} has {} rows",
        ix.distinct_keys(),
        ix.lookup(movie).len()
    );
    Ok(())
}
