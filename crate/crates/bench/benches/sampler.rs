use criterion::{criterion_group, criterion_main, Criterion};
use qaft::sampler::run_chains;
use qaft::SamplerConfig;

fn short_chain(c: &mut Criterion) {
    let mut group = c.benchmark_group("nuts_200_iterations");
    group.sample_size(10);
    let cfg = SamplerConfig { chains: 1, warmup_iters: 100, sampling_iters: 100, ..SamplerConfig::default() };
    for f in qaft_bench::all(300) {
        group.bench_function(f.name, |b| b.iter(|| run_chains(&f.posterior, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, short_chain);
criterion_main!(benches);
