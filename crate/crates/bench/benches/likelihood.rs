use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qaft::likelihood::loglik_pointwise;
use std::hint::black_box;

fn log_density_and_grad(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_density_and_grad");
    for n in [100, 1000] {
        for f in qaft_bench::all(n) {
            let mut grad = vec![0.0; f.z.len()];
            group.bench_with_input(BenchmarkId::new(f.name, n), &f, |b, f| {
                b.iter(|| f.posterior.log_density_and_grad(black_box(&f.z), &mut grad))
            });
        }
    }
    group.finish();
}

fn pointwise(c: &mut Criterion) {
    let mut group = c.benchmark_group("loglik_pointwise");
    for f in qaft_bench::all(1000) {
        let model = f.posterior.model();
        let data = f.posterior.data();
        group.bench_function(f.name, |b| b.iter(|| loglik_pointwise(model, black_box(&f.truth), data).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, log_density_and_grad, pointwise);
criterion_main!(benches);
