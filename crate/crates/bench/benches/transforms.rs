use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tfnorm_bench::{field, grid, signal};
use tfnorm_core::grid::gaussian;
use tfnorm_core::stft::{reconstruct, StftPlan};
use tfnorm_core::tfconv::twisted_conv;
use tfnorm_core::dft;

fn bench_dft(c: &mut Criterion) {
    let mut group = c.benchmark_group("dft");
    for n in [128, 1024] {
        let f = signal(&grid(n, 16.0 / n as f64 * 2.0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| b.iter(|| dft(black_box(f))));
    }
    group.finish();
}

fn bench_stft(c: &mut Criterion) {
    let mut group = c.benchmark_group("stft");
    for n in [64, 128, 256] {
        let g = grid(n, 32.0 / n as f64);
        let f = signal(&g);
        let plan = StftPlan::new(&g, &gaussian(&g)).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", n), &f, |b, f| b.iter(|| plan.forward(black_box(f)).unwrap()));
    }
    let g = grid(128, 0.25);
    let f = signal(&g);
    let phi = gaussian(&g);
    group.bench_function("reconstruct/128", |b| b.iter(|| reconstruct(black_box(&f), &phi).unwrap()));
    group.finish();
}

fn bench_twisted(c: &mut Criterion) {
    let mut group = c.benchmark_group("twisted_conv");
    group.sample_size(10);
    for n in [16, 32] {
        let g = grid(n, 0.5);
        let (a, b2) = (field(&g), field(&g));
        group.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| twisted_conv(black_box(&a), &b2).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_dft, bench_stft, bench_twisted);
criterion_main!(benches);
