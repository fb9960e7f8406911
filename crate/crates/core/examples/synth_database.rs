//! Generates a small correlated database, prints per-table statistics and
//! writes it as CSV.
//!
//! cargo run --example synth_database -- [out_dir]

use mscn::storage::{generate_synthetic_db, load_dir, save_dir, SynthConfig};

fn main() -> mscn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_db".to_string());
    let db = generate_synthetic_db(&SynthConfig::small(5_000, 10_000).with_rho(0.8), 42)?;
    for t in db.tables() {
        print!("{:<16} {:>7} rows ", t.name(), t.row_count());
        for c in t.attribute_columns() {
            let s = db.stats(t.name(), &c.name).unwrap();
            print!(" {}[{}..{}, {} distinct]", c.name, s.min, s.max, s.distinct_count);
        }
        println!();
    }
    for e in db.fk_edges() {
        println!("fk {e}");
    }
    save_dir(&db, &out)?;
    let back = load_dir(&out)?;
    println!("wrote {out}/ and read back {} tables", back.tables().count());
    Ok(())
}
