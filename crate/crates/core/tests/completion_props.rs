mod common;

use lli_core::completion::{check_full_support, OrderingSpec, OrderingVerdict, Provenance};
use lli_core::{check_consensus_ordering, mca, tca, unit_consistency_gap, SolverConfig, SparseTensor, SweepOrder};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_by_two_corner(a in 0.01f64..100.0, b in 0.01f64..100.0, c in 0.01f64..100.0) {
        let t = SparseTensor::new(vec![2, 2], vec![(vec![0, 0], a), (vec![0, 1], b), (vec![1, 0], c)]).unwrap();
        let done = mca(&t, &common::tight()).unwrap();
        prop_assert!(common::rel_err(done.get(&[1, 1]).unwrap(), b * c / a) <= 1e-8);
        prop_assert_eq!(done.provenance(&[1, 1]).unwrap(), Provenance::Completed);
    }

    #[test]
    fn rank_one_is_recovered(m in 3usize..15, n in 3usize..15, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let case = common::rank_one(&mut rng, m, n, 0.2);
        let done = tca(&case.observed, 1, &common::tight()).unwrap();
        for i in 0..m {
            for j in 0..n {
                let v = done.get(&[i, j]).unwrap();
                prop_assert!(common::rel_err(v, case.rows[i] * case.cols[j]) <= 1e-6);
            }
        }
    }

    #[test]
    fn supported_tensors_complete_uniquely(
        shape in prop_oneof![
            (2usize..8, 2usize..8).prop_map(|(a, b)| vec![a, b]),
            (2usize..5, 2usize..5, 2usize..5).prop_map(|(a, b, c)| vec![a, b, c]),
        ],
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let t = common::supported_sparse(&mut rng, &shape, 0.3);
        let report = check_full_support(&t, None);
        prop_assert!(report.fully_supported);
        prop_assert!(report.violations.is_empty());
        for k in 1..shape.len() {
            let a = tca(&t, k, &common::tight()).unwrap().materialize().unwrap();
            let cfg = SolverConfig { order: SweepOrder::Shuffled(seed ^ 0x5a5a), ..common::tight() };
            let b = tca(&t, k, &cfg).unwrap().materialize().unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(common::rel_err(*y, *x) <= 1e-8);
            }
        }
    }

    #[test]
    fn rescaling_commutes_with_completion(
        shape in prop_oneof![
            (2usize..7, 2usize..7).prop_map(|(a, b)| vec![a, b]),
            (2usize..5, 2usize..5, 2usize..5).prop_map(|(a, b, c)| vec![a, b, c]),
        ],
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let t = common::supported_sparse(&mut rng, &shape, 0.4);
        for k in 1..shape.len() {
            let z = common::random_scales(&mut rng, &shape, k);
            let gap = unit_consistency_gap(&t, &z, k, &common::tight()).unwrap();
            prop_assert!(gap < 1e-8, "k={} gap={:e}", k, gap);
        }
    }

    #[test]
    fn unobserved_prefixes_follow_the_consensus(
        shape in prop_oneof![
            (2usize..8, 2usize..8).prop_map(|(a, b)| vec![a, b]),
            (2usize..6, 2usize..6, 2usize..6).prop_map(|(a, b, c)| vec![a, b, c]),
        ],
        pick in any::<usize>(),
        seed in any::<u64>(),
    ) {
        let d = shape.len();
        let dim = pick % d;
        let mut rng = common::rng(seed);
        let case = common::ordered_case(&mut rng, &shape, dim);
        let done = tca(&case.tensor, d - 1, &common::tight()).unwrap();
        let spec = OrderingSpec { dim, gamma: case.gamma.clone() };
        let report = check_consensus_ordering(&done, &spec).unwrap();
        prop_assert!(report.known > 0 && report.unknown > 0);
        prop_assert_eq!(report.verdict, OrderingVerdict::Pass, "{:?}", report.violations);
    }
}
