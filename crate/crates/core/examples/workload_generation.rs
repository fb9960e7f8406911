//! Generates a random join workload and prints it in the text format.
//!
//! cargo run --example workload_generation -- [n] [max_joins]

use mscn::query::{format_query, generate_workload, parse_query};
use mscn::storage::{generate_synthetic_db, SynthConfig};

fn main() -> mscn::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(10);
    let max_joins = args.get(1).copied().unwrap_or(2);

    let db = generate_synthetic_db(&SynthConfig::small(2_000, 6_000), 1)?;
    let specs = generate_workload(&db, n, max_joins, 3)?;
    let mut per_joins = vec![0usize; max_joins + 1];
    for q in &specs {
        let text = format_query(q, None);
        assert_eq!(&parse_query(&text, &db)?.0, q);
        per_joins[q.join_count()] += 1;
        println!("{text}");
    }
    println!("join count histogram: {per_joins:?}");
    Ok(())
}
