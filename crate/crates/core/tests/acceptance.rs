//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mscn::baselines::{ibjs_estimate, rs_estimate};
use mscn::evalkit::{qerror, run_eval, write_report_csv, EvalOptions, EvalOutcome, MscnEstimator, RsEstimator};
use mscn::executor::{label_workload, true_cardinality, LabeledQuery};
use mscn::featurizer::{batch, build_catalog, featurize, FeaturizedBatch, FeaturizedQuery, SampleMode};
use mscn::model::{encode_model, loss, qerror_identity_gap, train_on_corpus, Hyperparams, LossKind, MscnModel, TrainOutcome};
use mscn::neural::grad_check;
use mscn::query::{generate_workload, QuerySpec};
use mscn::storage::{generate_synthetic_db, Database, IndexSet, SampleSet, SynthConfig};

const SEEDS: [u64; 3] = [1, 2, 3];
const MODES: [SampleMode; 3] = [SampleMode::Bitmap, SampleMode::Count, SampleMode::None];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

struct Suite {
    results: Vec<Outcome>,
}

impl Suite {
    fn record(&mut self, id: u32, name: &'static str, started: Instant, result: Result<String, String>) {
        let (pass, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let o = Outcome {
            id,
            name,
            pass,
            detail,
            elapsed: started.elapsed(),
        };
        println!("{}", line(&o));
        self.results.push(o);
    }
}

fn line(o: &Outcome) -> String {
    format!(
        "criterion {:>2} {} {} ({:.1}s): {}",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.elapsed.as_secs_f64(),
        o.detail
    )
}

fn check(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn batch_of(qs: &[&FeaturizedQuery]) -> FeaturizedBatch {
    batch(qs).unwrap()
}

// ---------------------------------------------------------------- fixture

struct Fixture {
    db: Database,
    samples: SampleSet,
    train: Vec<LabeledQuery>,
    heldout: Vec<LabeledQuery>,
    models: BTreeMap<(&'static str, u64), TrainOutcome>,
    train_time: BTreeMap<(&'static str, u64), Duration>,
    rs_heldout: EvalOutcome,
}

fn hp(seed: u64) -> Hyperparams {
    Hyperparams {
        d: 64,
        epochs: 100,
        batch_size: 256,
        lr: 0.001,
        loss: LossKind::MeanQError,
        seed,
    }
}

fn build_fixture() -> Fixture {
    let t = Instant::now();
    let db = generate_synthetic_db(&SynthConfig::default().with_rho(0.8), 42).unwrap();
    let samples = SampleSet::draw(&db, 100, 7).unwrap();
    let specs = generate_workload(&db, 14_000, 2, 1).unwrap();
    let labeled = label_workload(&db, &specs, &samples, 1).unwrap();
    assert!(labeled.queries.len() >= 11_000, "only {} non-empty queries", labeled.queries.len());
    let mut queries = labeled.queries;
    queries.truncate(11_000);
    let heldout = queries.split_off(10_000);
    println!(
        "fixture: {} training / {} held-out queries, {} empty dropped ({:.1}s)",
        queries.len(),
        heldout.len(),
        labeled.dropped_empty,
        t.elapsed().as_secs_f64()
    );
    let rs_heldout = run_eval(&RsEstimator { db: &db, samples: &samples }, &heldout, EvalOptions::default()).unwrap();
    Fixture {
        db,
        samples,
        train: queries,
        heldout,
        models: BTreeMap::new(),
        train_time: BTreeMap::new(),
        rs_heldout,
    }
}

fn train_all(f: &mut Fixture) {
    for seed in SEEDS {
        for mode in MODES {
            let t = Instant::now();
            let out = train_on_corpus(&f.db, &f.train, mode, &hp(seed)).unwrap();
            println!(
                "trained {}/seed {seed}: final val mean q-error {:.3} ({:.1}s)",
                mode.name(),
                out.history.last().unwrap().val_mean_qerror,
                t.elapsed().as_secs_f64()
            );
            f.models.insert((mode.name(), seed), out);
            f.train_time.insert((mode.name(), seed), t.elapsed());
        }
    }
}

fn eval_model(model: &MscnModel, qs: &[LabeledQuery]) -> EvalOutcome {
    run_eval(&MscnEstimator::new(model), qs, EvalOptions::default()).unwrap()
}

// --------------------------------------------------------------- criteria

fn permutation_padding(f: &Fixture) -> Result<String, String> {
    let model = &f.models[&("bitmap", 1)].model;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    for q in f.heldout.iter().take(200) {
        let fq = featurize(q, &model.catalog).unwrap();
        let y = model.predict_normalized(&batch_of(&[&fq])).unwrap()[0];

        let mut perm = fq.clone();
        perm.tables.shuffle(&mut rng);
        perm.joins.shuffle(&mut rng);
        perm.predicates.shuffle(&mut rng);
        let yp = model.predict_normalized(&batch_of(&[&perm])).unwrap()[0];

        let mut padded = batch_of(&[&perm]);
        padded.tables = padded.tables.padded(rng.gen_range(1..4));
        padded.joins = padded.joins.padded(rng.gen_range(1..4));
        padded.predicates = padded.predicates.padded(rng.gen_range(1..4));
        let ypad = model.predict_normalized(&padded).unwrap()[0];

        for v in [yp, ypad] {
            worst = worst.max((v - y).abs() / y.abs());
        }
    }
    check(worst <= 1e-6, format!("max relative change {worst:.2e} over 200 queries (limit 1e-6)"))
}

fn gradient_check(f: &Fixture) -> Result<String, String> {
    let labels: Vec<u64> = f.train.iter().map(|q| q.true_cardinality).collect();
    let catalog = build_catalog(&f.db, &labels, 100, SampleMode::Bitmap).unwrap();
    let mut model = MscnModel::new(
        catalog.clone(),
        Hyperparams {
            d: 8,
            seed: 5,
            ..hp(5)
        },
    )
    .unwrap();
    // move off the zero-bias initialization, where empty-set placeholders sit
    // exactly on ReLU kinks
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p: Vec<f64> = model.params().iter().map(|w| w + rng.gen_range(-0.1..0.1)).collect();
    model.set_params(&p).unwrap();

    let feats: Vec<FeaturizedQuery> = f.train.iter().take(400).map(|q| featurize(q, &catalog).unwrap()).collect();
    // keep queries with multi-element sets and |Δ| > 1e-2
    let chosen: Vec<&FeaturizedQuery> = feats
        .iter()
        .filter(|q| q.tables.len() > 1 && q.predicates.len() > 1)
        .filter(|q| {
            let y = model.predict_normalized(&batch_of(&[q])).unwrap()[0];
            (y - q.label.unwrap()).abs() > 1e-2
        })
        .take(4)
        .collect();
    let b = batch_of(&chosen);
    let mut details = Vec::new();
    let mut ok = chosen.len() == 4;
    for kind in [LossKind::Mse, LossKind::MeanQError] {
        let (_, g) = model.loss_and_gradients(&b, kind).unwrap();
        let r = grad_check(
            |p| {
                let mut m = model.clone();
                m.set_params(p).unwrap();
                m.loss_and_gradients(&b, kind).unwrap().0
            },
            &model.params(),
            &g,
            1e-6,
            usize::MAX,
            9,
        );
        ok &= r.max_rel_error <= 1e-4 && r.checked >= 200;
        details.push(format!("{kind:?}: {} coords, max rel err {:.2e}", r.checked, r.max_rel_error));
    }
    check(ok, format!("d=8, batch {}; {}", chosen.len(), details.join("; ")))
}

fn loss_identity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let log_min = rng.gen_range(0.0..3.0);
        let log_max = log_min + rng.gen_range(1.0..20.0);
        let (y, label) = (rng.gen_range(0.001..0.999), rng.gen_range(0.001..0.999));
        worst = worst.max(qerror_identity_gap(y, label, log_min, log_max));
        // and through the public loss and q-error functions
        let via_loss = loss(&[y], &[label], LossKind::MeanQError, log_max - log_min).unwrap().value;
        let denorm = |v: f64| (v * (log_max - log_min) + log_min).exp();
        let direct = qerror(denorm(y), denorm(label)).unwrap();
        worst = worst.max((via_loss - direct).abs() / direct);
    }
    check(worst <= 1e-9, format!("max relative gap {worst:.2e} over 1000 pairs (limit 1e-9)"))
}

/// Counts result tuples by enumerating every row combination, binding
/// tables in breadth-first order over the join graph.
fn nested_loop_count(db: &Database, q: &QuerySpec) -> u64 {
    let aliases: Vec<&str> = {
        let mut order = vec![q.tables.iter().next().unwrap().alias.as_str()];
        while order.len() < q.tables.len() {
            for j in &q.joins {
                let (l, r) = (j.left.alias.as_str(), j.right.alias.as_str());
                if order.contains(&l) && !order.contains(&r) {
                    order.push(r);
                } else if order.contains(&r) && !order.contains(&l) {
                    order.push(l);
                }
            }
        }
        order
    };
    fn rec(db: &Database, q: &QuerySpec, aliases: &[&str], bound: &mut Vec<usize>) -> u64 {
        let k = bound.len();
        if k == aliases.len() {
            return 1;
        }
        let alias = aliases[k];
        let table = db.table(q.table_of(alias).unwrap()).unwrap();
        let value = |a: &str, col: &str, row: usize| {
            let t = db.table(q.table_of(a).unwrap()).unwrap();
            t.column(col).unwrap().values[row]
        };
        let mut total = 0;
        'rows: for row in 0..table.row_count() {
            for p in q.predicates_on(alias) {
                if !p.op.eval(value(alias, &p.column.column, row), p.literal) {
                    continue 'rows;
                }
            }
            for j in &q.joins {
                for (me, other) in [(&j.left, &j.right), (&j.right, &j.left)] {
                    if me.alias != alias {
                        continue;
                    }
                    if let Some(pos) = aliases[..k].iter().position(|&a| a == other.alias) {
                        if value(alias, &me.column, row) != value(&other.alias, &other.column, bound[pos]) {
                            continue 'rows;
                        }
                    }
                }
            }
            bound.push(row);
            total += rec(db, q, aliases, bound);
            bound.pop();
        }
        total
    }
    rec(db, q, &aliases, &mut Vec::new())
}

fn oracle_equivalence() -> Result<String, String> {
    let db = generate_synthetic_db(&SynthConfig::small(120, 360), 11).unwrap();
    let max_rows = db.tables().map(|t| t.row_count()).max().unwrap();
    let specs = generate_workload(&db, 200, 4, 12).unwrap();
    let mut mismatches = 0;
    let mut nonzero = 0;
    for q in &specs {
        let hash = true_cardinality(&db, q).unwrap();
        let nested = nested_loop_count(&db, q);
        mismatches += usize::from(hash != nested);
        nonzero += usize::from(nested > 0);
    }
    check(
        mismatches == 0 && max_rows <= 1000,
        format!("{mismatches} mismatches on 200 queries ({nonzero} non-empty, up to 4 joins, <= {max_rows} rows per table)"),
    )
}

fn baseline_sanity(f: &Fixture) -> Result<String, String> {
    let db = generate_synthetic_db(&SynthConfig::small(300, 800), 21).unwrap();
    let full = SampleSet::full(&db).unwrap();
    let idx = IndexSet::for_join_keys(&db).unwrap();
    let specs = generate_workload(&db, 300, 4, 22).unwrap();
    let labeled = label_workload(&db, &specs, &full, 1).unwrap().queries;
    let mut worst: f64 = 1.0;
    for q in &labeled {
        let e = ibjs_estimate(&db, &full, &idx, &q.spec).unwrap();
        worst = worst.max(qerror(e, q.true_cardinality as f64).unwrap());
    }

    let mut rs_checked = 0;
    let mut rs_bad = 0;
    for q in f.train.iter().chain(&f.heldout).filter(|q| q.spec.join_count() == 0) {
        let t = q.spec.tables.iter().next().unwrap();
        let pop = q.bitmaps[&t.alias].count_ones();
        if pop == 0 {
            continue;
        }
        let rows = f.db.table(&t.table).unwrap().row_count();
        let expect = (pop as f64 * rows as f64 / 100.0).max(1.0);
        rs_checked += 1;
        rs_bad += usize::from(rs_estimate(&f.db, &f.samples, &q.spec).unwrap() != expect);
    }
    check(
        worst == 1.0 && rs_bad == 0 && rs_checked > 0,
        format!(
            "IBJS with S = |t|: max q-error {worst} on {} queries; RS extrapolation: {rs_bad} of {rs_checked} single-table estimates differ from popcount·|t|/S",
            labeled.len()
        ),
    )
}

fn end_to_end(f: &Fixture) -> Result<String, String> {
    let out = eval_model(&f.models[&("bitmap", 1)].model, &f.heldout);
    let m = out.overall().report.clone().unwrap();
    let rs = f.rs_heldout.overall().report.clone().unwrap();
    check(
        m.median <= 3.0 && m.p95 <= 25.0 && m.mean < rs.mean,
        format!(
            "MSCN(bitmap) on {} held-out: median {:.3} (<= 3.0), p95 {:.3} (<= 25.0), mean {:.3} vs RS mean {:.3}; training took {:.1}s",
            m.n,
            m.median,
            m.p95,
            m.mean,
            rs.mean,
            f.train_time[&("bitmap", 1)].as_secs_f64()
        ),
    )
}

fn zero_tuple(f: &Fixture) -> Result<String, String> {
    let opts = EvalOptions {
        zero_tuple_only: true,
        threads: 1,
    };
    let m = run_eval(&MscnEstimator::new(&f.models[&("bitmap", 1)].model), &f.heldout, opts).unwrap();
    let rs = run_eval(&RsEstimator { db: &f.db, samples: &f.samples }, &f.heldout, opts).unwrap();
    let n = m.overall().n;
    if n < 30 {
        return Err(format!("only {n} 0-tuple queries in the held-out set (need >= 30)"));
    }
    let (mp, rp) = (m.overall().report.as_ref().unwrap().p95, rs.overall().report.as_ref().unwrap().p95);
    check(mp < rp, format!("{n} 0-tuple queries: MSCN p95 {mp:.3} vs RS p95 {rp:.3}"))
}

fn ablation(f: &Fixture) -> Result<String, String> {
    let mut means = Vec::new();
    for mode in MODES {
        let avg = SEEDS
            .iter()
            .map(|&s| eval_model(&f.models[&(mode.name(), s)].model, &f.heldout).overall().report.clone().unwrap().mean)
            .sum::<f64>()
            / SEEDS.len() as f64;
        means.push((mode.name(), avg));
    }
    let text = means.iter().map(|(m, v)| format!("{m} {v:.3}")).collect::<Vec<_>>().join(", ");
    check(
        means[0].1 <= means[1].1 && means[1].1 <= means[2].1,
        format!("3-seed held-out mean q-error: {text}"),
    )
}

fn generalization(f: &Fixture) -> Result<String, String> {
    let specs = generate_workload(&f.db, 1500, 4, 33).unwrap();
    let mut by_joins: BTreeMap<usize, Vec<QuerySpec>> = BTreeMap::new();
    for s in specs {
        let j = s.join_count();
        if j >= 3 && by_joins.get(&j).map_or(0, Vec::len) < 250 {
            by_joins.entry(j).or_default().push(s);
        }
    }
    let mut workload = Vec::new();
    for j in [3, 4] {
        let labeled = label_workload(&f.db, &by_joins[&j], &f.samples, 1).unwrap().queries;
        if labeled.len() < 100 {
            return Err(format!("only {} non-empty {j}-join queries", labeled.len()));
        }
        workload.extend(labeled.into_iter().take(100));
    }

    let mut in_range = true;
    let mut medians3 = Vec::new();
    let mut medians4 = Vec::new();
    for seed in SEEDS {
        let model = &f.models[&("bitmap", seed)].model;
        let (lo, hi) = (model.catalog.min_label(), model.catalog.max_label());
        for q in &workload {
            let c = model.predict_labeled(q).unwrap();
            in_range &= c.is_finite() && c >= lo * (1.0 - 1e-12) && c <= hi * (1.0 + 1e-12);
        }
        let out = eval_model(model, &workload);
        medians3.push(out.for_join_count(3).unwrap().report.as_ref().unwrap().median);
        medians4.push(out.for_join_count(4).unwrap().report.as_ref().unwrap().median);
    }
    let rs = run_eval(&RsEstimator { db: &f.db, samples: &f.samples }, &workload, EvalOptions::default()).unwrap();
    let rs3 = rs.for_join_count(3).unwrap().report.as_ref().unwrap().median;
    let rs4 = rs.for_join_count(4).unwrap().report.as_ref().unwrap().median;
    let m3 = medians3.iter().sum::<f64>() / 3.0;
    let m4 = medians4.iter().sum::<f64>() / 3.0;
    check(
        in_range && m3 <= rs3,
        format!(
            "predictions finite and in training range: {in_range}; 3 joins median MSCN {m3:.3} vs RS {rs3:.3} (4 joins: MSCN {m4:.3}, RS {rs4:.3})"
        ),
    )
}

fn convergence(f: &Fixture) -> Result<String, String> {
    let h = &f.models[&("bitmap", 1)].history;
    if h.len() != 100 {
        return Err(format!("history has {} epochs", h.len()));
    }
    let (e5, e100) = (h[4].val_mean_qerror, h[99].val_mean_qerror);
    check(e100 < e5, format!("validation mean q-error epoch 5 {e5:.3} -> epoch 100 {e100:.3}"))
}

fn report_bytes(out: &EvalOutcome) -> Vec<u8> {
    let mut v = Vec::new();
    write_report_csv(&out.rows, &mut v).unwrap();
    v
}

fn reproducibility(f: &Fixture) -> Result<String, String> {
    let first = &f.models[&("bitmap", 1)];
    let again = train_on_corpus(&f.db, &f.train, SampleMode::Bitmap, &hp(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    mscn::model::save_model(&first.model, &pa).unwrap();
    mscn::model::save_model(&again.model, &pb).unwrap();
    let same_model = std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
    let same_report =
        report_bytes(&eval_model(&first.model, &f.heldout)) == report_bytes(&eval_model(&again.model, &f.heldout));
    let size = encode_model(&again.model).unwrap().len();
    check(
        same_model && same_report && first.history == again.history,
        format!("model files identical: {same_model}, reports identical: {same_report}, model size {size} bytes"),
    )
}

fn main() {
    // cargo passes harness flags such as --nocapture or a name filter
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut suite = Suite { results: Vec::new() };

    let t = Instant::now();
    suite.record(3, "loss identity", t, loss_identity());
    let t = Instant::now();
    suite.record(4, "oracle equivalence", t, oracle_equivalence());

    let mut f = build_fixture();
    let t = Instant::now();
    suite.record(2, "gradient correctness", t, gradient_check(&f));
    let t = Instant::now();
    suite.record(5, "baseline sanity", t, baseline_sanity(&f));

    let t = Instant::now();
    train_all(&mut f);
    let training = t.elapsed();
    println!("trained {} models in {:.1}s", f.models.len(), training.as_secs_f64());

    let t = Instant::now();
    suite.record(1, "permutation and padding invariance", t, permutation_padding(&f));
    let t = Instant::now();
    suite.record(6, "scaled end-to-end quality", t, end_to_end(&f));
    let t = Instant::now();
    suite.record(7, "0-tuple robustness", t, zero_tuple(&f));
    let t = Instant::now();
    suite.record(8, "ablation direction", t, ablation(&f));
    let t = Instant::now();
    suite.record(9, "generalization to more joins", t, generalization(&f));
    let t = Instant::now();
    suite.record(10, "convergence", t, convergence(&f));
    let t = Instant::now();
    suite.record(11, "reproducibility", t, reproducibility(&f));

    suite.results.sort_by_key(|o| o.id);
    println!("\nacceptance summary ({:.1}s total)", started.elapsed().as_secs_f64());
    for o in &suite.results {
        println!("{}", line(o));
    }
    let failed: Vec<u32> = suite.results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", suite.results.len());
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
