use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hjlab_bench::{grid, smooth_field};
use hjlab_core::grid::gradient_squared;
use hjlab_core::solver::step;
use hjlab_core::{HamiltonianSpec, SpectralPlan};
use std::hint::black_box;

const SIZES: [(usize, usize); 4] = [(1, 256), (2, 32), (2, 64), (2, 128)];

fn label(dim: usize, cells: usize) -> String {
    if dim == 1 {
        format!("1d-{cells}")
    } else {
        format!("2d-{cells}x{cells}")
    }
}

fn heat_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("heat_apply");
    for (dim, cells) in SIZES {
        let d = grid(dim, cells);
        let plan = SpectralPlan::new(&d);
        let f = smooth_field(&d);
        group.bench_with_input(
            BenchmarkId::from_parameter(label(dim, cells)),
            &f,
            |b, f| b.iter(|| plan.heat_apply(black_box(f), 1e-3).unwrap()),
        );
    }
    group.finish();
}

fn imex_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for p in [0.5, 1.5, 2.0] {
        let spec = HamiltonianSpec::new(1.0, p, 0.0).unwrap();
        for (dim, cells) in SIZES {
            let d = grid(dim, cells);
            let plan = SpectralPlan::new(&d);
            let u = smooth_field(&d);
            let id = BenchmarkId::new(format!("p={p}"), label(dim, cells));
            group.bench_with_input(id, &u, |b, u| {
                b.iter(|| step(black_box(u), 1e-5, &spec, &d, &plan).unwrap())
            });
        }
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient_squared");
    for (dim, cells) in SIZES {
        let d = grid(dim, cells);
        let f = smooth_field(&d);
        group.bench_with_input(
            BenchmarkId::from_parameter(label(dim, cells)),
            &f,
            |b, f| b.iter(|| gradient_squared(black_box(f), &d).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, heat_apply, imex_step, gradient);
criterion_main!(benches);
