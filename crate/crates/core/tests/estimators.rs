use aws_sgd::estimators::{Forest, RegressionTree, TreeParams};
use proptest::prelude::*;

fn sse(ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m) * (y - m)).sum()
}

/// Smallest two-leaf squared error over every feature and every cut between
/// distinct values, by exhaustive search.
fn best_stump_sse(xs: &[Vec<f64>], ys: &[f64], min_leaf: usize) -> f64 {
    let mut best = sse(ys);
    for f in 0..xs[0].len() {
        let mut cuts: Vec<f64> = xs.iter().map(|x| x[f]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for t in &cuts[..cuts.len() - 1] {
            let (l, r): (Vec<usize>, Vec<usize>) = (0..ys.len()).partition(|&i| xs[i][f] <= *t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let total = sse(&l.iter().map(|&i| ys[i]).collect::<Vec<_>>()) + sse(&r.iter().map(|&i| ys[i]).collect::<Vec<_>>());
            best = best.min(total);
        }
    }
    best
}

fn data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(prop_oneof![(0..4).prop_map(f64::from), -5.0..5.0f64], 3), n),
            prop::collection::vec(0.0..1.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn stump_finds_the_best_split((xs, ys) in data(), min_leaf in 1usize..4) {
        let idx: Vec<usize> = (0..ys.len()).collect();
        let tree = RegressionTree::fit(&xs, &ys, &idx, TreeParams { max_depth: 1, min_leaf });
        let fitted: f64 = xs.iter().zip(&ys).map(|(x, y)| (tree.predict(x) - y).powi(2)).sum();
        let oracle = best_stump_sse(&xs, &ys, min_leaf);
        prop_assert!((fitted - oracle).abs() <= 1e-9 * (1.0 + oracle), "tree {fitted} vs oracle {oracle}");
    }

    #[test]
    fn deep_tree_interpolates_distinct_points((xs, ys) in data()) {
        let mut keys: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
        keys.sort();
        keys.dedup();
        prop_assume!(keys.len() == xs.len());
        let idx: Vec<usize> = (0..ys.len()).collect();
        let tree = RegressionTree::fit(&xs, &ys, &idx, TreeParams { max_depth: 64, min_leaf: 1 });
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!((tree.predict(x) - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn forest_is_deterministic_and_bounded((xs, ys) in data(), seed in any::<u64>()) {
        let params = TreeParams { max_depth: 6, min_leaf: 2 };
        let a = Forest::fit(&xs, &ys, 7, params, seed);
        let b = Forest::fit(&xs, &ys, 7, params, seed);
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for x in &xs {
            prop_assert_eq!(a.predict(x), b.predict(x));
            prop_assert!(a.predict(x) >= lo - 1e-12 && a.predict(x) <= hi + 1e-12);
        }
    }
}
