use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use renewgan_bench::desk_wind;
use renewgan_core::eval::{kde_fit, symmetric_kld, temporal_correlation, DEFAULT_BANDWIDTH};
use renewgan_core::gan::{build_discriminator, build_generator, GanConfig, LossKind};
use renewgan_core::tensor::{Graph, NormMode};
use renewgan_core::Tensor;
use std::hint::black_box;

fn networks(c: &mut Criterion) {
    let mut group = c.benchmark_group("desk_networks");
    for batch in [16usize, 64] {
        let cfg = GanConfig::desk(LossKind::Wasserstein);
        let mut gen = build_generator(&cfg, 8, 24).unwrap();
        let mut disc = build_discriminator(&cfg, 8, 24).unwrap();
        let z = Tensor::from_fn(&[batch, 100, 1, 1], |i| ((i * 7919) % 997) as f64 / 997.0 - 0.5);
        group.bench_with_input(BenchmarkId::new("generator_forward_backward", batch), &batch, |b, _| {
            b.iter(|| {
                let mut g = Graph::new();
                let x = g.constant(z.clone());
                let out = gen.forward(&mut g, x, NormMode::Train, true).unwrap();
                let loss = g.mean(out.output);
                black_box(g.backward(loss).unwrap());
            })
        });
        let x = Tensor::from_fn(&[batch, 1, 8, 24], |i| (i % 13) as f64 / 13.0);
        group.bench_with_input(BenchmarkId::new("critic_forward_backward", batch), &batch, |b, _| {
            b.iter(|| {
                let mut g = Graph::new();
                let xv = g.constant(x.clone());
                let out = disc.forward(&mut g, xv, NormMode::Train, true).unwrap();
                let loss = g.mean(out.output);
                black_box(g.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let ds = desk_wind(100);
    let values = ds.all_values();
    let p = kde_fit(&values, DEFAULT_BANDWIDTH).unwrap();
    let q = kde_fit(&values[..values.len() / 2], DEFAULT_BANDWIDTH).unwrap();
    c.bench_function("kde_fit_19200", |b| b.iter(|| kde_fit(black_box(&values), DEFAULT_BANDWIDTH).unwrap()));
    c.bench_function("symmetric_kld", |b| b.iter(|| symmetric_kld(black_box(&p), black_box(&q)).unwrap()));
    c.bench_function("temporal_correlation_100d", |b| b.iter(|| temporal_correlation(black_box(&ds)).unwrap()));
}

criterion_group!(benches, networks, evaluation);
criterion_main!(benches);
