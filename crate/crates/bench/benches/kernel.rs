use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use panelgwas::genotype_io::decode_bed_codes_into;
use panelgwas::kernel::{correlate, p_from_t, prepare_genotype_batch};
use panelgwas::{Precision, StatBlock};
use panelgwas_bench::{basis, correlations, hard_calls, packed_rows, panel, raw_batch};

const N: usize = 2000;
const M: usize = 1024;
const P: usize = 128;
const C: usize = 3;

fn bench_correlate(c: &mut Criterion) {
    let b = basis(1, N, C);
    let raw = raw_batch(2, M, N);
    let mut group = c.benchmark_group("correlate");
    group.throughput(Throughput::Elements((M * P) as u64));
    for precision in [Precision::F32StoreF64Acc, Precision::F64] {
        let g = prepare_genotype_batch(&raw, Some(&b), false, precision).g;
        let y = panel(3, N, P, &b, precision);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{precision:?}")), &(g, y), |bench, (g, y)| {
            bench.iter(|| correlate(black_box(g), black_box(y)).unwrap())
        });
    }
    group.finish();
}

fn bench_prepare(c: &mut Criterion) {
    let b = basis(1, N, C);
    let raw = raw_batch(2, M, N);
    let mut group = c.benchmark_group("prepare_genotype_batch");
    group.throughput(Throughput::Elements(M as u64));
    for residualize in [false, true] {
        group.bench_function(BenchmarkId::new("residualize", residualize), |bench| {
            bench.iter(|| prepare_genotype_batch(black_box(&raw), Some(&b), residualize, Precision::F32StoreF64Acc))
        });
    }
    group.finish();
}

fn bench_stats(c: &mut Criterion) {
    let df = (N - 2) as f64;
    let r = correlations(4, M, P);
    let mut group = c.benchmark_group("stats");
    group.throughput(Throughput::Elements((M * P) as u64));
    group.bench_function("stat_block", |bench| {
        bench.iter(|| StatBlock::from_correlations(black_box(r.clone()), df).unwrap())
    });
    group.finish();

    let ts: Vec<f64> = (0..1000).map(|i| i as f64 * 0.02 - 10.0).collect();
    let mut group = c.benchmark_group("p_from_t");
    group.throughput(Throughput::Elements(ts.len() as u64));
    for df in [10.0, 1998.0, 1e6] {
        group.bench_with_input(BenchmarkId::from_parameter(df), &df, |bench, &df| {
            bench.iter(|| ts.iter().map(|&t| p_from_t(black_box(t), df).unwrap()).sum::<f64>())
        });
    }
    group.finish();
}

fn bench_decode(c: &mut Criterion) {
    let packed = packed_rows(&hard_calls(5, M, N));
    let mut out = vec![0f32; N];
    let mut group = c.benchmark_group("decode_bed");
    group.throughput(Throughput::Elements((M * N) as u64));
    group.bench_function("rows", |bench| {
        bench.iter(|| {
            let mut missing = 0;
            for row in &packed {
                missing += decode_bed_codes_into(black_box(row), &mut out);
            }
            missing
        })
    });
    group.finish();
}

criterion_group!(benches, bench_correlate, bench_prepare, bench_stats, bench_decode);
criterion_main!(benches);
