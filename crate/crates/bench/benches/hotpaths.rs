//! Benchmarks for the hot paths: matrix exponentials, event location,
//! full reset sequences, and Hausdorff distances between sampled clouds.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};

use resetsim_core::analysis::{hausdorff, PointCloud};
use resetsim_core::model::build_reset_system;
use resetsim_core::numerics::{expm, first_zero, RootOpts, DEFAULT_RANK_TOL};
use resetsim_core::simulate::{reset_instants, SimOptions};

fn spinner() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
    )
}

fn third_order() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(3, 3, &[0.0, -3.0, 1.0, 1.0, -1.0, 0.0, 0.0, -1.0, -1.0]),
        DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]),
    )
}

fn bench_expm(c: &mut Criterion) {
    let (a3, _) = third_order();
    let a8 = DMatrix::from_fn(8, 8, |i, j| ((i * 8 + j) as f64 * 0.37).sin());
    c.bench_function("expm_3x3", |b| {
        b.iter(|| expm(black_box(&a3), black_box(0.73)))
    });
    c.bench_function("expm_8x8", |b| {
        b.iter(|| expm(black_box(&a8), black_box(0.73)))
    });
}

fn bench_first_zero(c: &mut Criterion) {
    let (a, cm) = third_order();
    let x0 = DVector::from_vec(vec![-0.3794, 0.2, 1.0]);
    let opts = RootOpts::default();
    c.bench_function("first_zero_third_order", |b| {
        b.iter(|| {
            first_zero(
                black_box(&a),
                black_box(&cm),
                black_box(&x0),
                0.0,
                10.0,
                &opts,
                None,
            )
            .unwrap()
        })
    });
}

fn bench_reset_instants(c: &mut Criterion) {
    let (a, cm) = spinner();
    let sys = build_reset_system(a, cm, 1, DEFAULT_RANK_TOL).unwrap();
    let x0 = DVector::from_vec(vec![0.75, 0.25]);
    let opts = SimOptions {
        t_max: 10.0,
        ..SimOptions::default()
    };
    c.bench_function("reset_instants_spinner_t10", |b| {
        b.iter(|| reset_instants(black_box(&sys), black_box(&x0), &opts).unwrap())
    });
}

fn bench_hausdorff(c: &mut Criterion) {
    let cloud = |seed: f64, n: usize| PointCloud {
        points: (0..n)
            .map(|k| {
                let t = k as f64 * 0.01 + seed;
                DVector::from_vec(vec![t.sin(), (2.0 * t).cos(), (0.5 * t).sin()])
            })
            .collect(),
        t_horizon: 1.0,
        source_x0: DVector::zeros(3),
    };
    let (p, q) = (cloud(0.0, 1000), cloud(0.3, 1000));
    c.bench_function("hausdorff_1000x1000", |b| {
        b.iter(|| hausdorff(black_box(&p), black_box(&q)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_expm,
    bench_first_zero,
    bench_reset_instants,
    bench_hausdorff
);
criterion_main!(benches);
