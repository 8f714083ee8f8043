use std::hint::black_box;

use capanneal_bench::workload;
use capanneal_core::synthetic::{pickup_instance, vehicle_instance};
use capanneal_core::{anneal, associations, inner_solve, AnnealConfig, CapacitySpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_associations(c: &mut Criterion) {
    let mut group = c.benchmark_group("associations");
    for n in [100, 1000, 10_000] {
        let (ds, state) = workload(n, 8, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| associations(black_box(&ds), black_box(&state)).unwrap())
        });
    }
    group.finish();
}

fn bench_inner_solve(c: &mut Criterion) {
    let (ds, state) = workload(1000, 8, 2);
    let cfg = AnnealConfig::default();
    c.bench_function("inner_solve/1000x8", |b| {
        b.iter(|| inner_solve(&ds, state.clone(), &CapacitySpec::None, &cfg).unwrap())
    });
}

fn bench_anneal(c: &mut Criterion) {
    let mut group = c.benchmark_group("anneal");
    group.sample_size(10);
    let cfg = AnnealConfig::default();
    let (ds, cap) = vehicle_instance(0).unwrap();
    group.bench_function("vehicle", |b| b.iter(|| anneal(&ds, 6, &cap, &cfg).unwrap()));
    let (_, ds, cap) = pickup_instance(0).unwrap();
    group.bench_function("pickup", |b| b.iter(|| anneal(&ds, 10, &cap, &cfg).unwrap()));
    let (ds, _) = workload(500, 5, 3);
    group.bench_function("blobs/500x5", |b| {
        b.iter(|| anneal(&ds, 5, &CapacitySpec::None, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_associations, bench_inner_solve, bench_anneal);
criterion_main!(benches);
