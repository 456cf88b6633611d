use aws_sgd::data::{gen_categorical_dataset, gen_margin_dataset, parse_libsvm, rbf_featurize, shuffle_split, to_libsvm, CategoricalSpec, LibsvmOptions, MarginSpec};
use aws_sgd::losses::{loss_gradient, loss_value, psi};
use aws_sgd::model::{project_in_place, sigmoid, Label};
use aws_sgd::sampling::SamplingInput;
use aws_sgd::{Dataset, Example, LossKind, ModelParams, PiSpec, ProjectionBall, Task};
use proptest::prelude::*;

fn vec_in(d: usize, lim: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-lim..lim, d)
}

fn scalar_family() -> impl Strategy<Value = PiSpec> {
    prop_oneof![
        Just(PiSpec::ExpSaturating),
        Just(PiSpec::ClampLinear),
        (0.3..3.0f64, 0.2..4.0f64).prop_map(|(a, b)| PiSpec::ClampPower { a, b }),
        (0.1..10.0f64).prop_map(|mu| PiSpec::Ratio { mu }),
        (0.1..10.0f64).prop_map(|mu| PiSpec::RatioSqrt { mu }),
    ]
}

fn any_family() -> impl Strategy<Value = PiSpec> {
    prop_oneof![
        scalar_family(),
        (0.1..2.0f64, 0.1..5.0f64).prop_map(|(beta, mu)| PiSpec::StarSquaredHinge { beta, mu }),
        (1.0..4.0f64, 0.1..2.0f64, 1.0..3.0f64).prop_map(|(a, beta, rho)| PiSpec::StarGsh { a, beta, rho }),
        (0.0..5.0f64).prop_map(|omega| PiSpec::AbsErrorProportional { omega }),
        (0.05..0.95f64, 0.1..2.0f64, 0.0..0.9f64, 0.1..4.0f64).prop_map(|(a, beta, c, rho)| {
            PiSpec::UncertaintyBinary { a, beta, c, rho, r: 1.0 }
        }),
        (0.1..2.0f64, 0.1..2.0f64, 0.1..4.0f64).prop_map(|(eta, beta, rho)| PiSpec::PowerOfZeta { eta, beta, rho }),
        (0.0..=1.0f64).prop_map(|p| PiSpec::Constant { p }),
    ]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_non_expansive(
        a in vec_in(5, 10.0),
        b in vec_in(5, 10.0),
        c in vec_in(5, 2.0),
        radius in 0.0..5.0f64,
    ) {
        let ball = ProjectionBall { center: Some(c.clone()), radius: Some(radius) };
        let (mut pa, mut pb) = (a.clone(), b.clone());
        project_in_place(&mut pa, &ball);
        project_in_place(&mut pb, &ball);
        prop_assert!(dist(&pa, &c) <= radius * (1.0 + 1e-12) + 1e-12);
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-12);
        let mut again = pa.clone();
        project_in_place(&mut again, &ball);
        prop_assert!(dist(&again, &pa) <= 1e-12);
        if dist(&a, &c) <= radius {
            prop_assert_eq!(pa, a);
        }
    }

    #[test]
    fn sigmoid_is_symmetric(u in -700.0..700.0f64) {
        prop_assert!((sigmoid(u) + sigmoid(-u) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn probabilities_lie_in_the_unit_interval(spec in any_family(), loss in 0.0..50.0f64, m in -20.0..20.0f64, p in 0.0..100.0f64) {
        let input = SamplingInput { loss, margin: m, gap: m.abs(), psi: Some(p) };
        let v = spec.eval(&input);
        prop_assert!((0.0..=1.0).contains(&v), "{spec:?} gave {v}");
    }

    #[test]
    fn primitive_derivative_is_the_probability(spec in scalar_family(), x in 0.0..20.0f64) {
        let h = 1e-6;
        let lo = (x - h).max(0.0);
        let fd = (spec.primitive(x + h).unwrap() - spec.primitive(lo).unwrap()) / (x + h - lo);
        prop_assert!((fd - spec.eval_scalar(x)).abs() <= 1e-5, "{spec:?} at {x}: {fd} vs {}", spec.eval_scalar(x));
    }

    #[test]
    fn primitive_is_monotone_and_invertible(spec in scalar_family(), x in 0.0..20.0f64, dx in 0.0..5.0f64, y in 1e-6..10.0f64) {
        prop_assert!(spec.primitive(x + dx).unwrap() >= spec.primitive(x).unwrap());
        let inv = spec.inverse(y).unwrap();
        let back = spec.primitive(inv).unwrap();
        prop_assert!((back - y).abs() <= 1e-8 * y.max(1.0), "{spec:?}: {y} -> {inv} -> {back}");
    }

    #[test]
    fn gradients_match_finite_differences(theta in vec_in(4, 2.0), x in vec_in(4, 1.0), pos in any::<bool>()) {
        let y = if pos { 1.0 } else { -1.0 };
        let ex = Example::binary(x, y).unwrap();
        for kind in [LossKind::Logistic, LossKind::SquaredHinge, LossKind::GenSmoothHinge { a: 2.0 }] {
            let p = ModelParams::new(theta.clone(), Task::Binary).unwrap();
            let g = loss_gradient(kind, &ex, &p).unwrap();
            for j in 0..theta.len() {
                let h = 1e-6;
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (loss_value(kind, &ex, &ModelParams::new(up, Task::Binary).unwrap()).unwrap()
                    - loss_value(kind, &ex, &ModelParams::new(dn, Task::Binary).unwrap()).unwrap())
                    / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "{kind:?} coord {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn multiclass_gradient_matches_finite_differences(theta in vec_in(9, 2.0), x in vec_in(3, 1.0), c in 0usize..3) {
        let task = Task::Multiclass { k: 3 };
        let ex = Example::class(x, c).unwrap();
        let kind = LossKind::MultiCrossEntropy;
        let g = loss_gradient(kind, &ex, &ModelParams::new(theta.clone(), task).unwrap()).unwrap();
        for j in 0..theta.len() {
            let h = 1e-6;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (loss_value(kind, &ex, &ModelParams::new(up, task).unwrap()).unwrap()
                - loss_value(kind, &ex, &ModelParams::new(dn, task).unwrap()).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()));
        }
    }

    #[test]
    fn logistic_psi_is_gradient_ratio(theta in vec_in(4, 3.0), x in vec_in(4, 1.0)) {
        let ex = Example::binary(x.clone(), 1.0).unwrap();
        let u: f64 = theta.iter().zip(&x).map(|(a, b)| a * b).sum();
        let x2: f64 = x.iter().map(|v| v * v).sum();
        prop_assume!(x2 > 1e-6);
        let s = 1.0 / (1.0 + u.exp());
        let oracle = s * s * x2 / (-u).exp().ln_1p();
        let got = psi(LossKind::Logistic, &ex, &ModelParams::new(theta, Task::Binary).unwrap()).unwrap().unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn two_class_cross_entropy_is_logistic_of_twice_theta(theta in vec_in(4, 2.0), x in vec_in(4, 1.0), c in 0usize..2) {
        let mut blocks = theta.clone();
        blocks.extend(theta.iter().map(|v| -v));
        let multi = loss_value(LossKind::MultiCrossEntropy, &Example::class(x.clone(), c).unwrap(),
            &ModelParams::new(blocks, Task::Multiclass { k: 2 }).unwrap()).unwrap();
        let twice: Vec<f64> = theta.iter().map(|v| 2.0 * v).collect();
        let y = if c == 0 { 1.0 } else { -1.0 };
        let binary = loss_value(LossKind::Logistic, &Example::binary(x, y).unwrap(),
            &ModelParams::new(twice, Task::Binary).unwrap()).unwrap();
        prop_assert!((multi - binary).abs() <= 1e-12 * (1.0 + binary));
    }

    #[test]
    fn libsvm_round_trip(rows in prop::collection::vec((vec_in(6, 1e3), any::<bool>()), 1..20)) {
        let examples: Vec<Example> = rows
            .into_iter()
            .map(|(mut f, pos)| {
                f[1] = 0.0;
                Example::binary(f, if pos { 1.0 } else { -1.0 }).unwrap()
            })
            .collect();
        let ds = Dataset::new("r", Task::Binary, 6, examples).unwrap();
        let text = to_libsvm(&ds);
        let back = parse_libsvm(&text, "r", LibsvmOptions { dim: Some(6), ..Default::default() }).unwrap();
        prop_assert_eq!(back.examples.len(), ds.examples.len());
        for (a, b) in back.examples.iter().zip(&ds.examples) {
            prop_assert_eq!(&a.features, &b.features);
            prop_assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn shuffle_split_partitions(n in 1usize..200, f in 0.0..0.99f64, seed in any::<u64>()) {
        let examples = (0..n).map(|i| Example::binary(vec![i as f64], 1.0).unwrap()).collect();
        let ds = Dataset::new("s", Task::Binary, 1, examples).unwrap();
        let (train, test) = shuffle_split(&ds, f, seed).unwrap();
        prop_assert_eq!(train.len(), ((n as f64) * (1.0 - f)).ceil() as usize);
        let mut ids: Vec<usize> = train.examples.iter().chain(&test.examples).map(|e| e.features[0] as usize).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn margin_generator_honours_its_contract() {
    for seed in 0..5 {
        let spec = MarginSpec { n: 400, d: 7, rho_star: 0.2, r: 1.5, seed };
        let (ds, star) = gen_margin_dataset(&spec).unwrap();
        assert_eq!(ds.len(), 400);
        let star_norm = star.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((star_norm - 1.0).abs() <= 1e-12);
        for ex in &ds.examples {
            let Label::Binary(y) = ex.label else { panic!("binary") };
            let u = f64::from(y) * ex.features.iter().zip(&star).map(|(a, b)| a * b).sum::<f64>();
            assert!(u >= 0.2 - 1e-12);
            assert!(ex.features.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.5 + 1e-12);
        }
    }
}

#[test]
fn categorical_rows_are_one_hot() {
    let spec = CategoricalSpec { n: 500, cardinalities: vec![3, 1, 5, 2], prototypes: 4, mutation: 0.3, seed: 2 };
    let ds = gen_categorical_dataset(&spec).unwrap();
    assert_eq!(ds.d, 11);
    let offsets = [0, 3, 4, 9, 11];
    for ex in &ds.examples {
        assert!(ex.features.iter().all(|&v| v == 0.0 || v == 1.0));
        for w in offsets.windows(2) {
            assert_eq!(ex.features[w[0]..w[1]].iter().sum::<f64>(), 1.0);
        }
    }
    assert_eq!(gen_categorical_dataset(&spec).unwrap(), ds);
    let other = gen_categorical_dataset(&CategoricalSpec { seed: 3, ..spec.clone() }).unwrap();
    assert_ne!(other, ds);
    assert!(gen_categorical_dataset(&CategoricalSpec { mutation: 1.5, ..spec }).is_err());
}

#[test]
fn rbf_features_lie_in_the_unit_interval() {
    let (ds, _) = gen_margin_dataset(&MarginSpec { n: 300, d: 4, rho_star: 0.1, r: 1.0, seed: 0 }).unwrap();
    let (rbf, map) = rbf_featurize(&ds, 40, None, 1).unwrap();
    assert_eq!(rbf.d, 40);
    assert!(rbf.examples.iter().flat_map(|e| &e.features).all(|&v| v > 0.0 && v <= 1.0));
    // Each landmark is a data point, so it maps to 1 in its own coordinate.
    for (j, c) in map.landmarks.iter().enumerate() {
        assert_eq!(map.apply(c)[j], 1.0);
    }
    assert!(rbf_featurize(&ds, 301, None, 1).is_err());
}
