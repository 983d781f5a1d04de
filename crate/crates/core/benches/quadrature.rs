use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpx_core::kernel::KernelContext;
use gpx_core::moments::moment_point;
use gpx_core::quadrature::apply_kernel_sequential;
use gpx_core::{Complex64, Example1DParams, Example3DParams, Grid, GridState, QuadraticModel, Tolerance};

fn gaussian_state(grid: &Grid) -> GridState {
    let n = grid.dim() as i32;
    GridState::from_fn(grid.clone(), 0.0, 1.0, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::from_polar(PI.powf(-0.25 * n as f64) * (-0.5 * r2).exp(), 0.3 * x[0])
    })
}

fn kernel_application(c: &mut Criterion) {
    let tol = Tolerance::default();
    let cases = [
        ("1d_4096", QuadraticModel::example_1d(&Example1DParams::reference(), 0.5, 1.0).unwrap(), Grid::cube(1, -10.0, 10.0, 4096).unwrap()),
        ("3d_24", QuadraticModel::example_3d(&Example3DParams::reference(), 0.5, 1.0).unwrap(), Grid::cube(3, -6.0, 6.0, 24).unwrap()),
    ];

    let mut group = c.benchmark_group("apply_kernel");
    group.sample_size(10);
    for (name, model, grid) in &cases {
        let psi = gaussian_state(grid);
        let g0 = moment_point(&psi).unwrap();
        let kt = model.kappa_tilde(psi.norm_squared());
        let ctx = KernelContext::build(model, kt, &g0, 0.0, 0.7, &tol).unwrap();

        group.bench_with_input(BenchmarkId::new("sequential", name), &psi, |b, psi| {
            b.iter(|| apply_kernel_sequential(&ctx, psi, grid).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", name), &psi, |b, psi| {
            b.iter(|| gpx_core::quadrature::apply_kernel_parallel(&ctx, psi, grid).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernel_application);
criterion_main!(benches);
