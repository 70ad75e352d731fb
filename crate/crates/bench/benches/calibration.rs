use std::hint::black_box;

use conformal_spc::{conformal_p_value, fit};
use conformal_spc_bench::uniform_scores;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    for n in [100, 1_000, 10_000, 100_000] {
        let scores = uniform_scores(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| fit(black_box(s), 0.0027).unwrap())
        });
    }
    group.finish();
}

fn bench_p_value(c: &mut Criterion) {
    let mut group = c.benchmark_group("p_value");
    for n in [1_000, 100_000] {
        let model = fit(&uniform_scores(n, 2), 0.05).unwrap();
        let queries = uniform_scores(1_000, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &queries, |b, q| {
            b.iter(|| {
                q.iter()
                    .map(|s| conformal_p_value(&model, *s).unwrap())
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_fit, bench_p_value);
criterion_main!(benches);
