use criterion::{criterion_group, criterion_main, Criterion};
use qaft::inference::{standardized_quantile, Intervention};
use qaft::modelcheck::{psis_loo, PointwiseLogLik};
use std::hint::black_box;

fn standardization(c: &mut Criterion) {
    let mut group = c.benchmark_group("standardized_quantile");
    for f in qaft_bench::all(500) {
        let model = f.posterior.model();
        let data = f.posterior.data();
        let iv = Intervention::set(model, "x1", 1.0).unwrap();
        group.bench_function(f.name, |b| b.iter(|| standardized_quantile(model, &f.truth, data, &iv, black_box(0.5)).unwrap()));
    }
    group.finish();
}

fn psis(c: &mut Criterion) {
    // smooth, deterministic log-likelihood matrix: 1000 draws by 500 subjects
    let rows: Vec<Vec<f64>> =
        (0..1000).map(|m| (0..500).map(|i| -1.0 - 0.5 * ((m * 7919 + i * 104729) % 1000) as f64 / 1000.0).collect()).collect();
    let ll = PointwiseLogLik::from_rows(rows).unwrap();
    c.bench_function("psis_loo_1000x500", |b| b.iter(|| psis_loo(black_box(&ll)).unwrap()));
}

criterion_group!(benches, standardization, psis);
criterion_main!(benches);
