use std::hint::black_box;
use std::path::Path;

use binvmm::crossbar::{CrossbarParams, ReadMode, RowPolicy};
use binvmm::dataset::load_wdbc;
use binvmm::encoder::{pwm_accumulate, pwm_expand_with, QuantizedSample};
use binvmm::experiment::{train_trial, trial_split};
use binvmm::solver::{solve_read, PreparedRead, ReadBoundaryConditions};
use binvmm::{CrossbarState, ExperimentConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

/// Deterministic spread of resistances between 2 and 50 MΩ.
fn crossbar(n: usize) -> CrossbarState {
    let res: Vec<f64> = (0..n * n)
        .map(|i| if (i * 7 + i / n).is_multiple_of(3) { 2.0 } else { 50.0 } * (1.0 + 0.01 * (i % 13) as f64))
        .collect();
    CrossbarState::from_resistances(n, n, &res, CrossbarParams::default()).unwrap()
}

fn sample(n: usize) -> QuantizedSample {
    QuantizedSample::new((0..n).map(|i| ((i * 37) % 256) as u8).collect())
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solver");
    for n in [8, 32, 64] {
        let xbar = crossbar(n);
        let drive = vec![0.8; n];
        let bc = ReadBoundaryConditions {
            driven_column_voltages: drive.clone(),
            sensed_row: 0,
            nonsensed_row_policy: RowPolicy::Floating,
        };
        group.bench_with_input(BenchmarkId::new("solve_read", n), &n, |b, _| {
            b.iter(|| solve_read(black_box(&xbar), &bc).unwrap())
        });
        let prepared = PreparedRead::new(&xbar, 0, RowPolicy::Floating).unwrap();
        group.bench_with_input(BenchmarkId::new("prepared_solve", n), &n, |b, _| {
            b.iter(|| prepared.solve(black_box(&drive)).unwrap())
        });
    }
    group.finish();
}

fn pwm(c: &mut Criterion) {
    let mut group = c.benchmark_group("pwm_accumulate");
    let xbar = crossbar(8);
    let trace = pwm_expand_with(&sample(8), 0.8);
    group.bench_function("ideal", |b| {
        b.iter(|| pwm_accumulate(&xbar, 0, black_box(&trace), ReadMode::Ideal).unwrap())
    });
    group.bench_function("sneak", |b| {
        b.iter(|| pwm_accumulate(&xbar, 0, black_box(&trace), ReadMode::sneak()).unwrap())
    });
    group.finish();
}

fn training(c: &mut Criterion) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/wdbc.data");
    let ds = load_wdbc(path).unwrap();
    let config = ExperimentConfig::table1();
    let (train, _) = trial_split(&config, &ds, 0).unwrap();
    let mut group = c.benchmark_group("training");
    group.sample_size(20);
    group.bench_function("table1_trial", |b| {
        b.iter(|| train_trial(&config, black_box(&train), 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, solver, pwm, training);
criterion_main!(benches);
