//! Benchmarks of the analytical model itself: end-to-end evaluation,
//! hop counting, and the link simulator.

use criterion::{criterion_group, criterion_main, Criterion};
use mcm_bench::{even_partitions, fixture};
use mcm_core::costmodel::{end_to_end, ModelOptions};
use mcm_core::netsim::{run_scenario, Scenario};
use mcm_core::topology::HopStrategy;

fn bench_end_to_end(c: &mut Criterion) {
    let (task, topo, params) = fixture("alexnet-mini", 4);
    let parts = even_partitions(&task, 4, &params);
    let mut group = c.benchmark_group("end_to_end");
    for (label, options) in [
        ("store-and-load", ModelOptions::default()),
        ("redistribute", ModelOptions { redistribute: true, async_fuse: false }),
        ("async", ModelOptions { redistribute: false, async_fuse: true }),
    ] {
        group.bench_function(label, |b| {
            b.iter(|| end_to_end(&task, &parts, &topo, &params, &options).unwrap())
        });
    }
    group.finish();
}

fn bench_hops(c: &mut Criterion) {
    let (_, topo, _) = fixture("gemm-chain-2", 8);
    c.bench_function("hops/8x8-all-strategies", |b| {
        b.iter(|| {
            let mut total = 0u64;
            for strategy in HopStrategy::ALL {
                for chip in topo.chiplets() {
                    total += topo.hops(chip, strategy).unwrap();
                }
            }
            total
        })
    });
}

fn bench_netsim(c: &mut Criterion) {
    c.bench_function("netsim/dram-16-flows", |b| {
        b.iter(|| run_scenario(Scenario::Dram, 60e9).unwrap().1.completion_s)
    });
}

criterion_group!(benches, bench_end_to_end, bench_hops, bench_netsim);
criterion_main!(benches);
