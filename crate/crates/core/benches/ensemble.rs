//! Sequential vs data-parallel ensemble throughput.
//!
//! `workers = 1` takes the plain iterator path; larger counts go through the
//! rayon pool. Build with `--no-default-features` to compile rayon out
//! entirely, in which case every row below runs sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use mixnoise::dynamics::{run_trajectory, AmplitudeState, SystemParams};
use mixnoise::ensemble::{run_ensemble, EnsemblePoint};
use mixnoise::exec::resolve_workers;
use mixnoise::noise::NoiseModel;
use mixnoise::{RngStream, TimeGrid};

fn point(n_traj: u64) -> EnsemblePoint {
    let grid = TimeGrid::spanning(0.0, 5.0, 1e-3).unwrap();
    EnsemblePoint { n_traj, stride: 100, ..EnsemblePoint::new(SystemParams::default(), NoiseModel::ou(15.0, 1.0), grid) }
}

fn ensemble(c: &mut Criterion) {
    let n = 256;
    let p = point(n);
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    g.throughput(Throughput::Elements(n));
    // At least two workers so the pool path is measured even on one core.
    let all = resolve_workers(0).max(2);
    for (name, w) in [("sequential", 1), ("parallel", all)] {
        g.bench_with_input(BenchmarkId::new(name, w), &w, |b, &w| b.iter(|| run_ensemble(black_box(&p), w).unwrap()));
    }
    g.finish();
}

fn pieces(c: &mut Criterion) {
    let grid = TimeGrid::spanning(0.0, 5.0, 1e-3).unwrap();
    let mut g = c.benchmark_group("trajectory");
    for (name, model) in [
        ("ou", NoiseModel::ou(15.0, 1.0)),
        ("telegraph", NoiseModel::telegraph(0.35)),
        ("violet", NoiseModel::flicker(1.0, 2.0)),
    ] {
        g.bench_function(BenchmarkId::new("sample", name), |b| {
            b.iter(|| model.sample(&grid, RngStream::new(1, 0)).unwrap())
        });
    }
    let path = NoiseModel::ou(15.0, 1.0).sample(&grid, RngStream::new(1, 0)).unwrap();
    let params = SystemParams::default();
    g.bench_function("rk4", |b| b.iter(|| run_trajectory(&params, black_box(&path), &AmplitudeState::bell(), 100).unwrap()));
    g.finish();
}

criterion_group!(benches, ensemble, pieces);
criterion_main!(benches);
