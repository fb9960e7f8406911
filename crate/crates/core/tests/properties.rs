use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mscn::evalkit::{qerror, report};
use mscn::executor::{true_cardinality_rooted, Bitmap};
use mscn::neural::{adam_step, masked_mean_pool, AdamState, Matrix};
use mscn::query::{format_query, generate_query, parse_query};
use mscn::storage::{generate_synthetic_db, Database, SynthConfig};

fn db() -> &'static Database {
    static DB: OnceLock<Database> = OnceLock::new();
    DB.get_or_init(|| generate_synthetic_db(&SynthConfig::small(150, 400), 8).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn query_text_round_trips(seed in any::<u64>(), joins in 0usize..=4, label in proptest::option::of(1u64..1_000_000)) {
        let q = generate_query(db(), joins, &mut ChaCha8Rng::seed_from_u64(seed));
        let text = format_query(&q, label);
        let (back, l) = parse_query(&text, db()).unwrap();
        prop_assert_eq!(&back, &q);
        prop_assert_eq!(l, label);
        prop_assert_eq!(format_query(&back, label), text);
    }

    #[test]
    fn cardinality_does_not_depend_on_root(seed in any::<u64>()) {
        let q = generate_query(db(), 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let counts: Vec<u64> = q
            .tables
            .iter()
            .map(|t| true_cardinality_rooted(db(), &q, &t.alias).unwrap())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[0] == w[1]), "{:?}", counts);
    }

    #[test]
    fn bitmap_hex_round_trips(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
        let mut b = Bitmap::zeros(bits.len());
        for (i, &on) in bits.iter().enumerate() {
            if on {
                b.set(i);
            }
        }
        prop_assert_eq!(b.count_ones(), bits.iter().filter(|&&x| x).count());
        prop_assert_eq!(Bitmap::from_hex(&b.to_hex(), bits.len()).unwrap(), b);
    }

    #[test]
    fn qerror_is_symmetric_and_at_least_one(a in 1e-3f64..1e9, b in 1e-3f64..1e9) {
        let q = qerror(a, b).unwrap();
        prop_assert_eq!(q, qerror(b, a).unwrap());
        prop_assert!(q >= 1.0);
        prop_assert_eq!(q == 1.0, a == b);
    }

    #[test]
    fn report_ignores_input_order(mut errs in proptest::collection::vec(1f64..1e4, 1..200), seed in any::<u64>()) {
        let r = report(&errs).unwrap();
        use rand::seq::SliceRandom;
        errs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(report(&errs).unwrap(), r);
    }

    #[test]
    fn pooling_ignores_row_order_and_padding(
        rows in proptest::collection::vec(proptest::collection::vec(-10f64..10.0, 4), 1..12),
        seed in any::<u64>(),
        pad in 0usize..4,
    ) {
        let n = rows.len();
        let x = Matrix::from_vec(n, 4, rows.concat()).unwrap();
        let (base, _) = masked_mean_pool(&x, &vec![0; n], 1).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<f64> = order.iter().flat_map(|&i| rows[i].clone()).collect();
        let (p, _) = masked_mean_pool(&Matrix::from_vec(n, 4, permuted).unwrap(), &vec![0; n], 1).unwrap();

        // padding rows belong to a second set, so the first is unaffected
        let mut padded = rows.concat();
        padded.extend(std::iter::repeat_n(0.0, 4 * (pad + 1)));
        let mut owner = vec![0; n];
        owner.extend(std::iter::repeat_n(1, pad + 1));
        let (q, _) = masked_mean_pool(&Matrix::from_vec(n + pad + 1, 4, padded).unwrap(), &owner, 2).unwrap();

        for c in 0..4 {
            let b = base.data[c];
            prop_assert!((p.data[c] - b).abs() <= 1e-9 * b.abs().max(1.0));
            prop_assert_eq!(q.data[c], b);
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_a_no_op(params in proptest::collection::vec(-5f64..5.0, 1..50), steps in 1usize..5) {
        let mut p = params.clone();
        let mut state = AdamState::new(p.len());
        for _ in 0..steps {
            let zeros = vec![0.0; p.len()];
            adam_step(&mut p, &zeros, &mut state, 0.01).unwrap();
        }
        prop_assert_eq!(p, params);
    }
}
