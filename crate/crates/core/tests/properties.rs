mod common;

use std::collections::HashSet;

use ndarray::Array2;
use proptest::prelude::*;
use transduce_core::baselines::knn_fit;
use transduce_core::dataset::{dedup_min_by, make_splits, Input, LabeledSet, PropertyRecord};
use transduce_core::eval::{compute_metrics, extrapolative_precision, ood_tpr, EvalRow};
use transduce_core::featurizer::{composition_features, fit_scaler, parse_formula, transform, transform_columns, ElementTable, ScalerKind};
use transduce_core::transduction::{build_difference_index, select_anchor, AnchorSearcher, IndexConfig, IndexMode};

const POOL: [&str; 10] = ["Li", "B", "Na", "Al", "Si", "Ti", "Fe", "Cu", "Zr", "Sn"];

fn formula(parts: &[(usize, u32)]) -> String {
    parts.iter().map(|&(e, c)| format!("{}{}", POOL[e], c)).collect()
}

fn composition() -> impl Strategy<Value = Vec<(usize, u32)>> {
    prop::sample::subsequence((0..POOL.len()).collect::<Vec<_>>(), 1..5)
        .prop_flat_map(|els| {
            let n = els.len();
            (Just(els), prop::collection::vec(1u32..9, n))
        })
        .prop_map(|(els, counts)| els.into_iter().zip(counts).collect())
}

fn record(id: String, target: f64, key: Option<f64>, f: String) -> PropertyRecord {
    PropertyRecord {
        id,
        input: Input::Formula(f),
        target,
        dedup_key: key,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn formula_order_does_not_matter(parts in composition()) {
        let table = ElementTable::builtin();
        let mut rev = parts.clone();
        rev.reverse();
        let a = parse_formula(&formula(&parts)).unwrap();
        let b = parse_formula(&formula(&rev)).unwrap();
        prop_assert_eq!(&a, &b);
        let fa = composition_features(&a, &table).unwrap();
        prop_assert_eq!(fa.len(), 6 * table.n_properties());
        let fb = composition_features(&b, &table).unwrap();
        prop_assert!(fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn scaling_counts_only_scales_sums(parts in composition(), c in 2u32..6) {
        let table = ElementTable::builtin();
        let scaled: Vec<_> = parts.iter().map(|&(e, n)| (e, n * c)).collect();
        let a = composition_features(&parse_formula(&formula(&parts)).unwrap(), &table).unwrap();
        let b = composition_features(&parse_formula(&formula(&scaled)).unwrap(), &table).unwrap();
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            let expect = if i % 6 == 1 { x * f64::from(c) } else { *x };
            prop_assert!(close(expect, *y), "column {} {} vs {}", i, expect, y);
        }
        let ka = parse_formula(&formula(&parts)).unwrap().canonical_key();
        prop_assert_eq!(ka, parse_formula(&formula(&scaled)).unwrap().canonical_key());
    }

    #[test]
    fn split_partitions_and_ood_is_extreme(
        targets in prop::collection::vec(0u32..60, 20..300),
        seed in 0u64..1000,
    ) {
        let records: Vec<_> = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| record(format!("r{i:04}"), f64::from(t) * 0.5, None, "Fe".into()))
            .collect();
        let s = make_splits(&records, 0.05, 0.05, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.val.len() + s.ood.len(), records.len());
        let all: HashSet<&String> = s.train.iter().chain(&s.val).chain(&s.ood).collect();
        prop_assert_eq!(all.len(), records.len());
        let y = |id: &String| records.iter().find(|r| &r.id == id).unwrap().target;
        let min_ood = s.ood.iter().map(y).fold(f64::INFINITY, f64::min);
        let max_in = s.train.iter().chain(&s.val).map(y).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(max_in, s.support_max);
        prop_assert!(min_ood >= s.support_max);
        prop_assert_eq!(s.clone(), make_splits(&records, 0.05, 0.05, seed).unwrap());
    }

    #[test]
    fn dedup_is_idempotent(rows in prop::collection::vec((composition(), 0.0f64..10.0, -5.0f64..5.0), 1..40)) {
        let records: Vec<_> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (parts, t, k))| record(format!("d{i:03}"), t, Some(k), formula(&parts)))
            .collect();
        let once = dedup_min_by(records).unwrap();
        let twice = dedup_min_by(once.clone()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn metrics_ignore_row_order(
        rows in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, any::<bool>()), 4..40),
        rot in 1usize..39,
    ) {
        let eval: Vec<EvalRow> = rows
            .iter()
            .enumerate()
            .map(|(i, &(t, p, ood))| EvalRow { id: format!("e{i:02}"), y_true: t, y_pred: p, ood })
            .collect();
        let mut shuffled = eval.clone();
        shuffled.rotate_left(rot % eval.len());
        shuffled.reverse();
        let a = compute_metrics(&eval, 5.0, 0.3).unwrap();
        let b = compute_metrics(&shuffled, 5.0, 0.3).unwrap();
        prop_assert_eq!(a.tpr, b.tpr);
        prop_assert_eq!(a.precision_at_frac, b.precision_at_frac);
        prop_assert_eq!(a.counts, b.counts);
        prop_assert!(close(a.all_mae, b.all_mae));
        if let (Some(x), Some(y)) = (a.ood_mae, b.ood_mae) {
            prop_assert!(close(x, y));
        }
    }

    #[test]
    fn precision_is_rank_only(
        rows in prop::collection::vec((0.0f64..10.0, -3.0f64..3.0), 4..60),
        scale in 0.1f64..5.0,
        shift in -10.0f64..10.0,
    ) {
        let truth: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let pred: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("q{i:02}")).collect();
        let warped: Vec<f64> = pred.iter().map(|p| (scale * p).exp() + shift).collect();
        prop_assert_eq!(
            extrapolative_precision(&pred, &truth, &ids, 0.3).unwrap(),
            extrapolative_precision(&warped, &truth, &ids, 0.3).unwrap()
        );
    }

    #[test]
    fn raising_one_prediction_never_lowers_tpr(
        rows in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..30),
        which in 0usize..30,
        bump in 0.0f64..5.0,
    ) {
        let truth: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut pred: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let before = ood_tpr(&pred, &truth, 5.0);
        let i = which % pred.len();
        pred[i] += bump;
        let after = ood_tpr(&pred, &truth, 5.0);
        prop_assert!(after.unwrap_or(0.0) >= before.unwrap_or(0.0));
    }

    #[test]
    fn knn_never_leaves_training_range(seed in 0u64..500, k in 1usize..10) {
        let train = common::random_set(25, 3, seed);
        let q = Array2::from_shape_fn((10, 3), |(i, j)| (i as f64 - 5.0) * (j as f64 + 1.5));
        let p = knn_fit(&train, k).unwrap().predict_all(&q, transduce_core::Execution::Sequential).unwrap();
        prop_assert!(p.iter().all(|&v| v >= train.y_min() && v <= train.y_max()));
    }

    #[test]
    fn larger_index_never_increases_distance(seed in 0u64..200, m in 1usize..40) {
        let train = common::random_set(12, 3, seed);
        let small = build_difference_index(&train, IndexConfig { m, seed, ..IndexConfig::default() }).unwrap();
        let large = build_difference_index(&train, IndexConfig { m: m + 15, seed, ..IndexConfig::default() }).unwrap();
        let full = build_difference_index(&train, IndexConfig { mode: IndexMode::Exhaustive, ..IndexConfig::default() }).unwrap();
        for q in [[0.5, 0.5, 0.5], [2.0, -1.0, 0.0], [-3.0, 3.0, 1.0]] {
            let ds = select_anchor(&q, &train, &small).unwrap().distance;
            let dl = select_anchor(&q, &train, &large).unwrap().distance;
            let df = select_anchor(&q, &train, &full).unwrap().distance;
            prop_assert!(dl <= ds && df <= dl);
        }
    }

    #[test]
    fn fast_search_equals_reference_scan(seed in 0u64..300, d in 1usize..6) {
        let train = common::random_set(20, d, seed);
        let index = build_difference_index(&train, IndexConfig { mode: IndexMode::Exhaustive, ..IndexConfig::default() }).unwrap();
        let searcher = AnchorSearcher::new(&train, &index).unwrap();
        let queries = common::random_set(8, d, seed + 1);
        for r in 0..queries.len() {
            let q = queries.row(r).iter().map(|v| v * 3.0).collect::<Vec<_>>();
            prop_assert_eq!(searcher.select(&q).unwrap(), select_anchor(&q, &train, &index).unwrap());
        }
    }

    #[test]
    fn transform_leaves_scaler_untouched(seed in 0u64..200, kind in prop::sample::select(vec![ScalerKind::StandardNormalize, ScalerKind::MinMax, ScalerKind::None])) {
        let train: LabeledSet = common::random_set(15, 4, seed);
        let scaler = fit_scaler(train.x.view(), kind);
        let before = scaler.checksum();
        let unseen = common::random_set(5, 4, seed + 7);
        transform(unseen.x.view(), &scaler).unwrap();
        prop_assert_eq!(before, scaler.checksum());
        if kind == ScalerKind::StandardNormalize {
            let z = transform_columns(train.x.view(), &scaler).unwrap();
            for c in 0..4 {
                let col = z.column(c);
                let mean = col.sum() / 15.0;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 15.0;
                prop_assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
            }
        }
    }
}
