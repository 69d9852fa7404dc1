mod common;

use lli_core::recsys::{predict_3d, predict_3d_masked, top_n, Source};
use lli_core::{scale_apply, tca, ScaleSet, SubtensorKey};
use proptest::prelude::*;
use rand::Rng;

fn unobserved_order(model: &lli_core::CompletedTensor, user: usize, keep: &[usize]) -> Vec<usize> {
    let n = model.shape()[1];
    top_n(model, user, n, true, None)
        .unwrap()
        .into_iter()
        .map(|p| p.product)
        .filter(|p| keep.contains(p))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn users_agree_on_product_ranking(m in 3usize..10, n in 3usize..10, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let t = common::supported_sparse(&mut rng, &[m, n], 0.3);
        let model = tca(&t, 1, &common::tight()).unwrap();
        for u in 1..m {
            for w in (u + 1)..m {
                let both: Vec<usize> = (0..n)
                    .filter(|&p| !t.is_observed(&[u, p]) && !t.is_observed(&[w, p]))
                    .collect();
                prop_assert_eq!(unobserved_order(&model, u, &both), unobserved_order(&model, w, &both));
            }
        }
    }

    #[test]
    fn row_rescaling_keeps_rankings(m in 3usize..10, n in 3usize..10, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let t = common::supported_sparse(&mut rng, &[m, n], 0.3);
        let rows = ScaleSet::from_pairs(
            &[m, n],
            1,
            (0..m).map(|i| (SubtensorKey::new(vec![Some(i), None]), rng.gen_range(-3.0f64..3.0).exp())),
        )
        .unwrap();
        let base = tca(&t, 1, &common::tight()).unwrap();
        let scaled = tca(&scale_apply(&t, &rows).unwrap(), 1, &common::tight()).unwrap();
        let all: Vec<usize> = (0..n).collect();
        for u in 0..m {
            prop_assert_eq!(unobserved_order(&base, u, &all), unobserved_order(&scaled, u, &all));
        }
    }

    #[test]
    fn max_projection_dominates_its_fiber(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let shape = [4, 5, 3];
        let t = common::random_sparse(&mut rng, &shape, 0.4);
        let model = tca(&t, 2, &lli_core::SolverConfig::default()).unwrap();
        for u in 0..shape[0] {
            for p in 0..shape[2] {
                let pred = predict_3d(&model, u, p).unwrap();
                for f in 0..shape[1] {
                    prop_assert!(pred.rating >= model.get(&[u, f, p]).unwrap());
                }
                let f = pred.argmax_feature.unwrap();
                prop_assert_eq!(pred.rating, model.get(&[u, f, p]).unwrap());
                prop_assert_eq!(pred.source == Source::Observed, t.is_observed(&[u, f, p]));
            }
        }
    }

    #[test]
    fn dominant_feature_slice_wins(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let case = common::ordered_case(&mut rng, &[5, 4, 5], 1);
        let model = tca(&case.tensor, 2, &common::tight()).unwrap();
        let top = *case.gamma.last().unwrap();
        for u in 1..5 {
            for p in 1..5 {
                if case.gamma.iter().all(|&f| !case.tensor.is_observed(&[u, f, p])) {
                    let pred = predict_3d_masked(&model, u, p, &case.gamma).unwrap();
                    prop_assert_eq!(pred.argmax_feature, Some(top));
                }
            }
        }
    }
}

#[test]
fn ranking_follows_column_scales() {
    // column factors order as c2 > c0 > c1; user 2 has no observations
    let cols = [2.0, 1.0, 3.0];
    let rows = [1.0, 1.5];
    let entries = (0..2).flat_map(|i| (0..3).map(move |j| (vec![i, j], rows[i] * cols[j])));
    let t = lli_core::SparseTensor::new(vec![3, 3], entries).unwrap();
    let model = tca(&t, 1, &common::tight()).unwrap();
    let ranked: Vec<usize> = top_n(&model, 2, 3, false, None)
        .unwrap()
        .iter()
        .map(|p| p.product)
        .collect();
    assert_eq!(ranked, vec![2, 0, 1]);
}
