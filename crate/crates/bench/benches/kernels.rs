use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use spde_bench::{increments, white_problem};
use spde_core::grid::{holder_norms, GridSequence, StateNorm, TimeGrid};
use spde_core::noise::generate;
use spde_core::schemes::implicit_euler_run;
use spde_core::{LinearOperator, SeedDescriptor};

fn thomas(c: &mut Criterion) {
    let mut g = c.benchmark_group("resolvent_solve");
    for m in [128usize, 1024] {
        let res = LinearOperator::dirichlet_laplacian(m).unwrap().resolvent(1e-3).unwrap();
        let mut v = vec![1.0; m];
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| res.solve_in_place(&mut v).unwrap())
        });
    }
    g.finish();
}

fn noise(c: &mut Criterion) {
    c.bench_function("noise_2048x128", |b| {
        b.iter(|| generate(2048, 128, 1.0, SeedDescriptor::new(3, 0)).unwrap())
    });
}

fn holder(c: &mut Criterion) {
    let n = 128;
    let values: Vec<DVector<f64>> = (0..=n)
        .map(|j| DVector::from_fn(64, |i, _| ((i * j) as f64).sin()))
        .collect();
    let seq = GridSequence::new(TimeGrid::new(1.0, n).unwrap(), values).unwrap();
    c.bench_function("holder_norms_128x64", |b| {
        b.iter(|| holder_norms(&seq, &[0.0, 0.05, 0.2], &StateNorm::Sup).unwrap())
    });
}

fn euler(c: &mut Criterion) {
    let p = white_problem(128);
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let dw = increments(128, p.noise_dim);
    c.bench_function("implicit_euler_m128_n128", |b| {
        b.iter(|| implicit_euler_run(&p, grid, &dw).unwrap())
    });
}

criterion_group!(benches, thomas, noise, holder, euler);
criterion_main!(benches);
