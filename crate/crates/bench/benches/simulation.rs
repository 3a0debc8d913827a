//! Benchmarks for the hot paths: root finding, both propagation routes,
//! waiting-time sampling, full ensembles, and record densities.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lambda_shelve::{
    characteristic_roots, ensemble_run, evolve_analytic, evolve_ode, short_long_split,
    simulate_trajectory, trajectory_density, Amplitudes, Level, RngKey, SystemParams,
    WaitingSampler, ODE_DEFAULT_TOL,
};

/// Deep-regime configuration: realistic workload with well-separated scales.
fn reference() -> SystemParams {
    SystemParams::new(0.5, 5e-3, 0.0, 0.05, 1.0, 1e-4).expect("valid reference")
}

fn bench_roots(c: &mut Criterion) {
    let p = reference();
    c.bench_function("characteristic_roots", |b| {
        b.iter(|| characteristic_roots(black_box(&p)))
    });
}

fn bench_propagation(c: &mut Criterion) {
    let p = reference();
    c.bench_function("evolve_analytic", |b| {
        b.iter(|| evolve_analytic(black_box(&p), Level::One, black_box(2.0)).unwrap())
    });
    c.bench_function("evolve_ode", |b| {
        b.iter(|| {
            evolve_ode(
                black_box(&p),
                &Amplitudes::basis(Level::One),
                black_box(2.0),
                ODE_DEFAULT_TOL,
            )
            .unwrap()
        })
    });
}

fn bench_sampling(c: &mut Criterion) {
    let p = reference();
    c.bench_function("waiting_sampler_build", |b| {
        b.iter(|| WaitingSampler::new(black_box(&p), Level::One).unwrap())
    });
    let sampler = WaitingSampler::new(&p, Level::One).unwrap();
    let mut rng = RngKey { seed: 7, stream: 0 }.rng();
    c.bench_function("waiting_sampler_draw", |b| {
        b.iter(|| sampler.sample(&mut rng).unwrap())
    });
}

fn bench_analysis(c: &mut Criterion) {
    let p = reference();
    c.bench_function("short_long_split", |b| {
        b.iter(|| short_long_split(black_box(&p), Level::One).unwrap())
    });
    let record = simulate_trajectory(&p, Level::One, 2e3, RngKey { seed: 5, stream: 0 }).unwrap();
    c.bench_function("trajectory_density_2e3", |b| {
        b.iter(|| trajectory_density(&p, black_box(&record)).unwrap())
    });
}

fn bench_ensemble(c: &mut Criterion) {
    let p = reference();
    c.bench_function("ensemble_64_trajectories", |b| {
        b.iter(|| ensemble_run(&p, Level::One, 1e3, 64, 1, None).unwrap())
    });
}

criterion_group!(
    benches,
    bench_roots,
    bench_propagation,
    bench_sampling,
    bench_analysis,
    bench_ensemble
);
criterion_main!(benches);
