use std::hint::black_box;

use cnumlab_core::gas::{GasParams, Interaction};
use cnumlab_core::magnet::{sector_spectrum, SpinLattice};
use cnumlab_core::thermo::{audit_chain, ModelSpec};
use cnumlab_core::{Execution, ModeSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn modes() -> Vec<Execution> {
    let mut out = vec![Execution::Sequential];
    if Execution::parallel_available() {
        out.push(Execution::Parallel);
    }
    out
}

fn audit(c: &mut Criterion) {
    let params = GasParams::new(
        ModeSet::symmetric(1, 2.0).unwrap(),
        Interaction::Contact { g: 0.5 },
        0.5,
        -0.4,
        0.3,
        1.0,
    )
    .unwrap();
    let spec = ModelSpec::new(3);
    let mut group = c.benchmark_group("audit_chain");
    group.sample_size(10);
    for exec in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| audit_chain(black_box(&params), &spec, exec).unwrap())
        });
    }
    group.finish();
}

fn magnet(c: &mut Criterion) {
    let lattice = SpinLattice::chain(12);
    let mut group = c.benchmark_group("magnet_sectors");
    group.sample_size(10);
    for exec in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| sector_spectrum(black_box(&lattice), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, audit, magnet);
criterion_main!(benches);
