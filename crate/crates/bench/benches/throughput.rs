use std::hint::black_box;

use aws_sgd::estimators::{EstimatorKind, Forest, TreeParams};
use aws_sgd::{run_stream_on, PiSpec};
use aws_sgd_bench::{aws_config, margin_dataset};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn stream(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_stream");
    for d in [20, 300] {
        let ds = margin_dataset(5000, d);
        group.throughput(Throughput::Elements(ds.len() as u64));
        let cfg = aws_config();
        group.bench_with_input(BenchmarkId::new("oracle", d), &ds, |b, ds| b.iter(|| run_stream_on(&cfg, ds).unwrap()));
    }
    let ds = margin_dataset(2000, 20);
    let mut cfg = aws_config();
    cfg.estimator = EstimatorKind::forest(10, 50);
    if let EstimatorKind::Forest { refit_every, .. } = &mut cfg.estimator {
        *refit_every = 25;
    }
    group.throughput(Throughput::Elements(ds.len() as u64));
    group.sample_size(10);
    group.bench_function("forest_estimator", |b| b.iter(|| run_stream_on(&cfg, &ds).unwrap()));
    group.finish();
}

fn forest_fit(c: &mut Criterion) {
    let ds = margin_dataset(2000, 20);
    let xs: Vec<Vec<f64>> = ds.examples.iter().map(|e| e.features.clone()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (x[0] + x[1]).abs().min(1.0)).collect();
    let params = TreeParams { max_depth: 8, min_leaf: 2 };
    c.bench_function("forest_fit_2000x20_25_trees", |b| b.iter(|| Forest::fit(&xs, &ys, 25, params, 0)));
}

fn pi_inverse(c: &mut Criterion) {
    let mut group = c.benchmark_group("pi_inverse");
    for (name, spec) in [
        ("exp_saturating", PiSpec::ExpSaturating),
        ("ratio", PiSpec::Ratio { mu: 2.0 }),
        ("ratio_sqrt", PiSpec::RatioSqrt { mu: 2.0 }),
    ] {
        group.bench_function(name, |b| b.iter(|| spec.inverse(black_box(0.7)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, stream, forest_fit, pi_inverse);
criterion_main!(benches);
