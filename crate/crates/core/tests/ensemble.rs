mod common;

use common::*;
use dsokr::ensemble::{aggregate, aggregate_values, AggregationMode};
use proptest::prelude::*;

const MODES: [AggregationMode; 3] = [AggregationMode::RankSum, AggregationMode::ScoreAverage, AggregationMode::ScoreMax];

fn scores(t: usize, n_c: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..t).map(|_| (0..n_c).map(|_| normal(&mut r)).collect()).collect()
}

fn single_ranking(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_model_is_reproduced(seed in 0u64..10_000, n_c in 1usize..30) {
        let per = scores(1, n_c, seed);
        for mode in MODES {
            prop_assert_eq!(aggregate(mode, None, &per).unwrap(), single_ranking(&per[0]));
        }
    }

    #[test]
    fn duplicate_models_change_nothing(seed in 0u64..10_000) {
        let one = scores(1, 20, seed);
        let two = vec![one[0].clone(), one[0].clone()];
        for mode in MODES {
            prop_assert_eq!(aggregate(mode, None, &two).unwrap(), aggregate(mode, None, &one).unwrap());
        }
    }

    #[test]
    fn permutation_equivariance(seed in 0u64..10_000, t in 1usize..4) {
        let per = scores(t, 15, seed);
        let mut perm: Vec<usize> = (0..15).collect();
        let mut r = rng(seed + 9);
        for i in (1..15).rev() {
            let j = rand::Rng::random_range(&mut r, 0..=i);
            perm.swap(i, j);
        }
        // permuted[k] = original[perm[k]]
        let permuted: Vec<Vec<f64>> = per.iter().map(|s| perm.iter().map(|&p| s[p]).collect()).collect();
        for mode in MODES {
            let va = aggregate_values(mode, None, &per).unwrap();
            let vb = aggregate_values(mode, None, &permuted).unwrap();
            for k in 0..15 {
                prop_assert!((vb[k] - va[perm[k]]).abs() < 1e-12);
            }
            // rankings coincide exactly unless aggregate values tie
            let mut sorted = va.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[1] - w[0] > 1e-12) {
                let a = aggregate(mode, None, &per).unwrap();
                let b = aggregate(mode, None, &permuted).unwrap();
                let mapped: Vec<usize> = b.iter().map(|&k| perm[k]).collect();
                prop_assert_eq!(mapped, a);
            }
        }
    }

    #[test]
    fn rank_sum_ignores_monotone_rescaling(seed in 0u64..10_000, which in 0usize..3, a in 0.01f64..10.0) {
        let per = scores(3, 12, seed);
        let mut rescaled = per.clone();
        rescaled[which] = per[which].iter().map(|v| (a * v).exp() + 3.0).collect();
        let w = [0.5, 0.3, 0.2];
        prop_assert_eq!(
            aggregate(AggregationMode::RankSum, Some(&w), &per).unwrap(),
            aggregate(AggregationMode::RankSum, Some(&w), &rescaled).unwrap()
        );
    }
}
