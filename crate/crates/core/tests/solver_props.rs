mod common;

use lli_core::tensor::SubtensorIndex;
use lli_core::{lli, SolverConfig, SweepOrder};
use proptest::prelude::*;

fn small_case() -> impl Strategy<Value = (Vec<usize>, usize, u64)> {
    prop_oneof![
        (2usize..9, 2usize..9).prop_map(|(a, b)| vec![a, b]),
        (2usize..6, 2usize..6, 2usize..6).prop_map(|(a, b, c)| vec![a, b, c]),
    ]
    .prop_flat_map(|shape| {
        let d = shape.len();
        (Just(shape), 1..d, any::<u64>())
    })
}

/// Largest |log prod - 0| over the non-empty subtensors of `t`.
fn worst_log_product(t: &lli_core::SparseTensor, k: usize) -> f64 {
    let index = SubtensorIndex::build(t, k).unwrap();
    let mut worst: f64 = 0.0;
    for fam in index.families() {
        for slot in 0..fam.len() {
            let s: f64 = fam.members(slot).iter().map(|&e| t.value(e).ln()).sum();
            worst = worst.max(s.abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balanced_subtensors_multiply_to_one((shape, k, seed) in small_case()) {
        let mut rng = common::rng(seed);
        let t = common::random_sparse(&mut rng, &shape, 0.5);
        let m = lli(&t, k, &common::tight()).unwrap();
        prop_assert!(worst_log_product(&m.balanced, k) < 1e-8);
        prop_assert!(m.residual_trace.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn balanced_equals_scaled_input((shape, k, seed) in small_case()) {
        let mut rng = common::rng(seed);
        let t = common::random_sparse(&mut rng, &shape, 0.5);
        let m = lli(&t, k, &SolverConfig::default()).unwrap();
        for (e, (index, v)) in t.iter().enumerate() {
            let expected = v * m.scales.factor(index);
            prop_assert!(common::rel_err(m.balanced.value(e), expected) < 1e-10);
        }
    }

    #[test]
    fn balanced_tensor_ignores_sweep_order((shape, k, seed) in small_case()) {
        let mut rng = common::rng(seed);
        let t = common::random_sparse(&mut rng, &shape, 0.5);
        let base = lli(&t, k, &common::tight()).unwrap();
        for order in [SweepOrder::Reversed, SweepOrder::Shuffled(seed)] {
            let cfg = SolverConfig { order, ..common::tight() };
            let other = lli(&t, k, &cfg).unwrap();
            for (a, b) in base.balanced.values().iter().zip(other.balanced.values()) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn rebalancing_is_a_no_op((shape, k, seed) in small_case()) {
        let mut rng = common::rng(seed);
        let t = common::random_sparse(&mut rng, &shape, 0.5);
        let once = lli(&t, k, &common::tight()).unwrap();
        let twice = lli(&once.balanced, k, &common::tight()).unwrap();
        for (a, b) in once.balanced.values().iter().zip(twice.balanced.values()) {
            prop_assert!(common::rel_err(*b, *a) < 1e-8);
        }
        for (_, z) in twice.scales.iter() {
            prop_assert!((z - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn repeated_solves_are_bit_identical((shape, k, seed) in small_case()) {
        let mut rng = common::rng(seed);
        let t = common::random_sparse(&mut rng, &shape, 0.5);
        let a = lli(&t, k, &SolverConfig::default()).unwrap();
        let b = lli(&t, k, &SolverConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn parallel_path_matches_across_thread_counts() {
    // above the parallel threshold
    let mut rng = common::rng(11);
    let t = common::random_sparse(&mut rng, &[400, 300], 0.35);
    assert!(t.nnz() > 1 << 15);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| lli(&t, 1, &SolverConfig::default()).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
}
