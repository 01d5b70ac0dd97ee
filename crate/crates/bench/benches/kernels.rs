use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use plate_bench::{gaussian, square_grid};
use plate_core::model::NonlinearEvaluator;
use plate_core::{
    FluxForm, Integrator, IntegratorConfig, MaterialModel, Scheme, SpectralField, SymbolTable,
};
use std::hint::black_box;

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_round_trip");
    for points in [64, 128, 256] {
        let grid = square_grid(2, points);
        let f = gaussian(grid, 1.0, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(points), &f, |b, f| {
            b.iter(|| {
                let samples = f.to_physical();
                black_box(SpectralField::forward(grid, &samples).unwrap())
            })
        });
    }
    group.finish();
}

fn nonlinear_term(c: &mut Criterion) {
    let mut group = c.benchmark_group("nonlinear_term");
    for points in [64, 128] {
        let grid = square_grid(2, points);
        let eval = NonlinearEvaluator::new(
            grid,
            MaterialModel::quartic(2),
            2.0 / 3.0,
            FluxForm::Residual,
        )
        .unwrap();
        let u = gaussian(grid, 0.05, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(points), &u, |b, u| {
            b.iter(|| black_box(eval.evaluate(u).unwrap()))
        });
    }
    group.finish();
}

fn propagators(c: &mut Criterion) {
    let grid = square_grid(2, 256);
    let table = SymbolTable::new(grid, &MaterialModel::linear_isotropic(2)).unwrap();
    c.bench_function("propagators_256", |b| {
        b.iter(|| black_box(table.propagators(black_box(3.7))))
    });
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_128");
    let grid = square_grid(2, 128);
    let u0 = gaussian(grid, 0.01, 2.0);
    let u1 = gaussian(grid, 0.005, 2.0);
    for (name, scheme) in [
        ("duhamel_etd", Scheme::DuhamelEtd),
        ("semi_implicit_cn", Scheme::SemiImplicitCn),
    ] {
        let cfg = IntegratorConfig {
            scheme,
            ..IntegratorConfig::default()
        };
        let mut integ = Integrator::new(grid, MaterialModel::quartic(2), cfg).unwrap();
        let state = integ.initial_state(&u0, &u1).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| black_box(integ.step(&state, 0.1).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, transforms, nonlinear_term, propagators, steps);
criterion_main!(benches);
