use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlmc_core::constants::{constants_bundle, ConstantsOptions, LevelFactor};
use mlmc_core::model::{DriftModel, Payoff, ProblemSpec};
use mlmc_core::optimize::optimal_plan;
use mlmc_core::rng::sample_stream;
use mlmc_core::simulate::{level_sample, mlmc_estimate_serial};

fn ou() -> ProblemSpec {
    ProblemSpec::ou(0.0, 1.0).unwrap()
}

fn identity() -> Payoff {
    Payoff::linear(vec![1.0], 1.0).unwrap()
}

fn coupled_path(c: &mut Criterion) {
    let sine = ProblemSpec::new(vec![0.0; 4], 1.0, DriftModel::smooth_sine(0.5, 4).unwrap()).unwrap();
    let mut group = c.benchmark_group("coupled_path");
    for level in [2u32, 6, 10] {
        group.bench_with_input(BenchmarkId::new("ou_d1", level), &level, |b, &l| {
            let p = ou();
            let mut i = 0;
            b.iter(|| {
                i += 1;
                level_sample(&p, 2, l, &mut sample_stream(1, l as u64, i)).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("sine_d4", level), &level, |b, &l| {
            let mut i = 0;
            b.iter(|| {
                i += 1;
                level_sample(&sine, 2, l, &mut sample_stream(1, l as u64, i)).unwrap()
            })
        });
    }
    group.finish();
}

fn estimate(c: &mut Criterion) {
    let (p, f) = (ou(), identity());
    let plan = optimal_plan(&p, &f, 2, 0.1).unwrap().level_plan();
    c.bench_function("mlmc_estimate/ou_eps0.1", |b| {
        b.iter(|| mlmc_estimate_serial(&p, &f, black_box(&plan), 5).unwrap())
    });
}

fn constants(c: &mut Criterion) {
    let (p, f) = (ou(), identity());
    c.bench_function("constants_bundle/ou", |b| {
        b.iter(|| {
            constants_bundle(&p, &f, LevelFactor::Finite(2), Some((0.1, 1.5)), ConstantsOptions::default()).unwrap()
        })
    });
}

fn plan(c: &mut Criterion) {
    let (p, f) = (ou(), identity());
    let mut group = c.benchmark_group("optimal_plan");
    for eps in [1e-1, 1e-3, 1e-5] {
        group.bench_with_input(BenchmarkId::from_parameter(eps), &eps, |b, &e| {
            b.iter(|| optimal_plan(&p, &f, 2, black_box(e)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, coupled_path, estimate, constants, plan);
criterion_main!(benches);
