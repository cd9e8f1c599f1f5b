use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hypogd_core::baselines::{egpm_step, pnorm_step, EgpmState};
use hypogd_core::omd::hu_step;
use hypogd_core::projections::project;
use hypogd_core::spectral::{project_trace_ball, shu_step, thin_svd};
use hypogd_core::{ConstraintSet, HypentropyParams, PNormParams, Potential, RootFindConfig, WeightMatrix};

fn vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

fn vector_updates(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = HypentropyParams::new(0.1).unwrap();
    let mut group = c.benchmark_group("vector step");
    for d in [500, 10_000] {
        let w = vector(&mut rng, d, 0.01);
        let g = vector(&mut rng, d, 1.0);
        group.bench_with_input(BenchmarkId::new("hu", d), &d, |b, _| {
            b.iter(|| hu_step(black_box(&w), black_box(&g), 0.1, &params).unwrap())
        });
        let state = EgpmState::new(0.1, d).unwrap();
        group.bench_with_input(BenchmarkId::new("egpm", d), &d, |b, _| {
            b.iter(|| egpm_step(black_box(&state), black_box(&g), 0.1).unwrap())
        });
        let p = PNormParams::for_dimension(d);
        group.bench_with_input(BenchmarkId::new("pnorm", d), &d, |b, _| {
            b.iter(|| pnorm_step(black_box(&w), black_box(&g), 0.1, &p).unwrap())
        });
    }
    group.finish();
}

fn projections(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pot = Potential::hypentropy(0.1).unwrap();
    let cfg = RootFindConfig::default();
    let mut group = c.benchmark_group("hypentropy projection");
    for d in [100, 10_000] {
        let y = vector(&mut rng, d, 1.0);
        group.bench_with_input(BenchmarkId::new("l1", d), &d, |b, _| {
            b.iter(|| project(&pot, &ConstraintSet::L1Ball(1.0), black_box(&y), &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("l2", d), &d, |b, _| {
            b.iter(|| project(&pot, &ConstraintSet::L2Ball(1.0), black_box(&y), &cfg).unwrap())
        });
    }
    group.finish();
}

fn spectral(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = HypentropyParams::new(1.0).unwrap();
    let cfg = RootFindConfig::default();
    let mut group = c.benchmark_group("spectral");
    for (m, n) in [(15, 25), (50, 80)] {
        let label = format!("{m}x{n}");
        let x = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        group.bench_function(BenchmarkId::new("thin_svd", &label), |b| b.iter(|| thin_svd(black_box(&x)).unwrap()));
        let w = WeightMatrix::decomposed(x.clone()).unwrap();
        group.bench_function(BenchmarkId::new("shu_step", &label), |b| {
            b.iter(|| shu_step(black_box(&w), black_box(&g), 0.1, &params).unwrap())
        });
        let big = WeightMatrix::decomposed(&x * 10.0).unwrap();
        group.bench_function(BenchmarkId::new("trace_ball", &label), |b| {
            b.iter(|| project_trace_ball(black_box(&big), 5.0, &params, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, vector_updates, projections, spectral);
criterion_main!(benches);
