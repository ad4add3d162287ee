//! MXFP4 codec throughput: direct cast, dequantization and single-value encode.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use specqd_bench::random_matrix;
use specqd_core::{dequantize, fp4_encode, quantize_direct_cast};
use std::hint::black_box;

fn codec(c: &mut Criterion) {
    let w = random_matrix(1024, 1024, 11);
    let q = quantize_direct_cast(&w).unwrap();
    let mut group = c.benchmark_group("codec");
    group.throughput(Throughput::Elements((w.rows() * w.cols()) as u64));
    group.bench_function("direct_cast_1024x1024", |b| {
        b.iter(|| quantize_direct_cast(black_box(&w)).unwrap())
    });
    group.bench_function("dequantize_1024x1024", |b| b.iter(|| dequantize(black_box(&q))));
    group.throughput(Throughput::Elements(1024));
    let values: Vec<f32> = w.as_slice()[..1024].iter().map(|v| v * 6.0).collect();
    group.bench_function("fp4_encode_1024", |b| {
        b.iter(|| {
            values
                .iter()
                .map(|&v| fp4_encode(black_box(v)).unwrap().bits() as u32)
                .sum::<u32>()
        })
    });
    group.finish();
}

criterion_group!(benches, codec);
criterion_main!(benches);
