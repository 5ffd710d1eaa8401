//! Kernel benchmarks: leapfrog stepping, coupled stepping with forcing,
//! point classification, and norm assembly.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use mswl_bench::{bench_trace, stepping_grid};
use mswl_core::geometry::classify_point;
use mswl_core::norms::{assemble_m, RegionIndex};
use mswl_core::system::{solve_coupled, CoupledOpts, DataFamily, ProfileSet};
use mswl_core::waveop::{leapfrog_step, solve_linear, Forcing, InitialData, Manufactured, SolveOpts, StepperState};

fn bench_stencil(c: &mut Criterion) {
    let mut group = c.benchmark_group("leapfrog_step");
    for nx in [4096usize, 65_536, 524_288] {
        let grid = stepping_grid(nx);
        let kind = Manufactured::SplitBump { speed: 2.0, amplitude: 0.3 };
        let ic = kind.initial_data(&grid);
        group.throughput(Throughput::Elements(nx as u64));
        group.bench_with_input(BenchmarkId::from_parameter(nx), &nx, |b, _| {
            let mut state = StepperState::from_slices(ic.position.clone(), ic.position.clone(), 1, 2.0, &grid);
            b.iter(|| {
                leapfrog_step(&mut state, None, 2.0, &grid).unwrap();
            });
        });
    }
    group.finish();
}

fn bench_coupled_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_coupled");
    group.sample_size(10);
    let grid = stepping_grid(16_384);
    let fam = DataFamily::new(ProfileSet::Bump, 0.1).unwrap();
    group.throughput(Throughput::Elements((grid.nx * grid.n_steps) as u64));
    group.bench_function("bump_16k", |b| {
        b.iter(|| solve_coupled(&fam, 2.0, &grid, &CoupledOpts::default()).unwrap());
    });
    group.finish();
}

fn bench_linear_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_linear");
    group.sample_size(10);
    let grid = stepping_grid(16_384);
    let kind = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: 1.0, amplitude: 1.0 };
    let ic = kind.initial_data(&grid);
    group.bench_function("free_16k", |b| {
        b.iter(|| solve_linear(&ic, Forcing::None, 1.0, &grid, &SolveOpts::default()).unwrap());
    });
    let zero = InitialData::zero(&grid);
    let f = |_t: f64, x: f64| if x.abs() < 1.0 { x } else { 0.0 };
    group.bench_function("forced_16k", |b| {
        b.iter(|| solve_linear(&zero, Forcing::Fn(&f), 1.0, &grid, &SolveOpts::default()).unwrap());
    });
    group.finish();
}

fn bench_classification(c: &mut Criterion) {
    let mut group = c.benchmark_group("regions");
    group.bench_function("classify_point", |b| {
        b.iter(|| {
            let mut acc = 0usize;
            for i in 0..1000 {
                let t = 4.0 + (i as f64) * 0.06;
                let r = (i as f64) * 0.11;
                if classify_point(t, r, 2.0, 64.0).unwrap().is_some() {
                    acc += 1;
                }
            }
            acc
        });
    });
    let tr = bench_trace(2.0, 2048, 12.0);
    group.bench_function("region_index_build", |b| {
        b.iter(|| RegionIndex::build(&tr, 2.0).unwrap());
    });
    group.finish();
}

fn bench_norms(c: &mut Criterion) {
    let mut group = c.benchmark_group("norms");
    group.sample_size(10);
    let v = bench_trace(1.0, 1024, 10.0);
    let w = {
        let mut w = bench_trace(1.0, 1024, 10.0);
        w.speed = Some(2.0);
        w
    };
    group.bench_function("assemble_m_k1", |b| {
        b.iter(|| assemble_m(&v, &w, 2.0, 1).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_stencil, bench_coupled_solve, bench_linear_solve, bench_classification, bench_norms);
criterion_main!(benches);
