//! Property tests for the crate-wide invariants: probability simplexes,
//! CSV round-trips, clamping, grid geometry and the error decomposition.

use proptest::prelude::*;

use survope::core::rng::stream;
use survope::core::{
    load_dataset_csv, save_dataset_csv, softmax, Dataset, LoggedRecord, Policy,
    SoftmaxLinearPolicy, TimeGrid, UniformPolicy,
};
use survope::estimators::aggregate_trials;
use survope::nuisance::{clamp_censoring_weight, fit_kaplan_meier, FitTarget};
use survope::opl::MlpPolicy;

fn context_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, d)
}

fn record_strategy(d: usize, k: usize, with_cost: bool) -> impl Strategy<Value = LoggedRecord> {
    (
        context_strategy(d),
        0..k,
        1e-6f64..1e3,
        any::<bool>(),
        0.0f64..10.0,
    )
        .prop_map(move |(context, action, time, event, cost)| {
            let mut rec = LoggedRecord::new(context, action, time, event);
            if with_cost {
                rec = rec.with_cost(cost);
            }
            rec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_is_a_distribution(scores in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax(&scores);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn policies_emit_valid_distributions(
        x in context_strategy(4),
        weights in proptest::collection::vec(-3.0f64..3.0, 4 * 5),
        beta in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let linear = SoftmaxLinearPolicy::new(4, 5, beta, weights);
        let uniform = UniformPolicy { n_actions: 5 };
        let mlp = MlpPolicy::new(4, 5, &[8], &mut stream(seed, 0));
        for policy in [&linear as &dyn Policy, &uniform, &mlp] {
            let p = policy.probs(&x);
            prop_assert_eq!(p.len(), 5);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn clamp_never_lowers_and_respects_floor(g in 0.0f64..=1.0, floor in 1e-6f64..0.5) {
        let clamped = clamp_censoring_weight(g, floor);
        prop_assert!(clamped >= g);
        prop_assert!(clamped >= floor);
        if g >= floor {
            prop_assert_eq!(clamped, g);
        }
    }

    #[test]
    fn grid_points_increase_and_end_at_tau(tau in 0.1f64..50.0, m in 1usize..500) {
        let grid = TimeGrid::new(tau, m);
        let points = grid.points();
        prop_assert_eq!(points.len(), m);
        for w in points.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        prop_assert_eq!(*points.last().unwrap(), tau);
    }

    #[test]
    fn error_decomposition_identity(
        estimates in proptest::collection::vec(-10.0f64..10.0, 2..40),
        truth in -10.0f64..10.0,
    ) {
        let metrics = aggregate_trials(&estimates, truth).unwrap();
        prop_assert!((metrics.mse - (metrics.squared_bias + metrics.variance)).abs() < 1e-9);
        prop_assert!(metrics.variance >= 0.0);
        prop_assert!(metrics.squared_bias >= 0.0);
    }

    #[test]
    fn kaplan_meier_starts_at_one_and_never_increases(
        rows in proptest::collection::vec((1e-3f64..100.0, any::<bool>()), 1..60),
    ) {
        let records: Vec<LoggedRecord> =
            rows.iter().map(|&(t, e)| LoggedRecord::new(vec![0.0], 0, t, e)).collect();
        let data = Dataset::new(records, 1, 1).unwrap();
        let km = fit_kaplan_meier(&data, FitTarget::Event).unwrap();
        let mut prev = 1.0;
        for v in &km.values[0] {
            prop_assert!(*v <= prev + 1e-15);
            prop_assert!(*v >= 0.0);
            prev = *v;
        }
    }
}

proptest! {
    // File I/O cases are slower; fewer cases suffice for a round-trip law.
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip_is_identity(
        with_cost in any::<bool>(),
        records in (1usize..20).prop_flat_map(|n| {
            proptest::collection::vec(record_strategy(3, 4, false), n)
        }),
    ) {
        let records: Vec<LoggedRecord> = if with_cost {
            records.into_iter().enumerate().map(|(i, mut r)| {
                r.cost = Some(i as f64 * 0.25);
                r
            }).collect()
        } else {
            records
        };
        let dataset = Dataset::new(records, 3, 4).unwrap();
        let dir = std::env::temp_dir().join("survope_csv_prop");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("ds_{}.csv", std::process::id()));
        save_dataset_csv(&dataset, &path).unwrap();
        let back = load_dataset_csv(&path).unwrap();
        prop_assert_eq!(dataset, back);
    }
}
