use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{Vector3, Vector6};

use stokestrack_bench::{discretization, law, offset_pose, solver};
use stokestrack_core::dynamics::{elementary_solutions, resistance_matrix};
use stokestrack_core::stokes::BoundaryData;

fn bench_solver_build(c: &mut Criterion) {
    let pose = offset_pose();
    c.bench_function("solver_build", |b| b.iter(|| solver(&pose)));
}

fn bench_rigid_solve(c: &mut Criterion) {
    let pose = offset_pose();
    let disc = discretization(&pose);
    let solver = solver(&pose);
    let bc = BoundaryData::rigid(
        &disc,
        &Vector3::new(1.0, 0.0, 0.0),
        &Vector3::new(0.0, 0.0, 1.0),
        &pose.h,
    );
    c.bench_function("rigid_solve", |b| b.iter(|| solver.solve(&bc).unwrap()));
}

fn bench_resistance_assembly(c: &mut Criterion) {
    let pose = offset_pose();
    let solver = solver(&pose);
    c.bench_function("resistance_assembly", |b| {
        b.iter(|| resistance_matrix(&elementary_solutions(&solver, &pose).unwrap()).unwrap())
    });
}

fn bench_gain_query(c: &mut Criterion) {
    let law = law();
    let pose = stokestrack_core::geometry::Pose::identity();
    let velocity = Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.2);
    let acceleration = Vector6::new(0.0, 0.5, 0.0, 0.1, 0.0, 0.0);
    c.bench_function("gain_query", |b| {
        b.iter(|| law.mu(&pose, &velocity, &acceleration).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_solver_build, bench_rigid_solve, bench_resistance_assembly, bench_gain_query
}
criterion_main!(benches);
