use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctecs::ctstate::ct_state_of;
use ctecs::ecs::{ecs_for, EcsLimits};
use ctecs::fourier::estimate_expectation;
use ctecs::oracle::{fourier_transform, output_distribution, DEFAULT_DENSE_CAP};
use ctecs::sampler::AlgSampler;
use ctecs::{EstimatorConfig, Family};
use ctecs_bench::{damped_table, instance, MASTER};

fn estimator(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimator");
    group.sample_size(10);
    for family in [Family::Iqp, Family::CliffordMagic, Family::ConjugatedClifford] {
        let d = instance(family, 12);
        let state = ct_state_of(d.u_block()).unwrap();
        let op = ecs_for(&d, 0b1011, &EcsLimits::default()).unwrap();
        let cfg = EstimatorConfig::new(2000, 5, MASTER).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{family:?}")), |b| {
            b.iter(|| estimate_expectation(&state, &op, &cfg).unwrap().value)
        });
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampler");
    group.sample_size(10);
    let table = damped_table(12, 3, 0.3);
    let alg = AlgSampler::new(&table);
    group.bench_function("draw_1000", |b| b.iter(|| alg.draw(MASTER, 1000)));
    group.bench_function("enumerate", |b| b.iter(|| alg.enumerate(DEFAULT_DENSE_CAP).unwrap()));
    group.finish();
}

fn dense(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense");
    group.sample_size(10);
    for n in [10, 14] {
        let d = instance(Family::Iqp, n);
        let p = output_distribution(&d.defining_circuit(), DEFAULT_DENSE_CAP).unwrap();
        group.bench_with_input(BenchmarkId::new("evolve", n), &d, |b, d| {
            b.iter(|| output_distribution(&d.defining_circuit(), DEFAULT_DENSE_CAP).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fwht", n), p.probs(), |b, p| b.iter(|| fourier_transform(p)));
    }
    group.finish();
}

criterion_group!(benches, estimator, sampler, dense);
criterion_main!(benches);
