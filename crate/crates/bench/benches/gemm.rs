//! GEMM kernels: float reference against both MXFP4 paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use specqd_bench::{random_matrix, weights, TOKEN_COUNTS, WEIGHT_SHAPES};
use specqd_core::{
    gemm_mxfp4_int8, gemm_mxfp4_latescale_f32, gemm_reference, quantize_activations,
};
use std::hint::black_box;

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    group.sample_size(20);
    for (m, k) in WEIGHT_SHAPES {
        let (w, q) = weights(m, k);
        for n in TOKEN_COUNTS {
            let a = random_matrix(k, n, 7);
            let panel = quantize_activations(&a).unwrap();
            let id = format!("{m}x{n}x{k}");
            group.throughput(Throughput::Elements((m * n * k) as u64));
            group.bench_with_input(BenchmarkId::new("reference", &id), &a, |b, a| {
                b.iter(|| gemm_reference(black_box(&w), black_box(a)).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("latescale_f32", &id), &a, |b, a| {
                b.iter(|| gemm_mxfp4_latescale_f32(black_box(&q), black_box(a)).unwrap())
            });
            // activation quantization is part of the int8 path's cost
            group.bench_with_input(BenchmarkId::new("int8", &id), &a, |b, a| {
                b.iter(|| {
                    let panel = quantize_activations(black_box(a)).unwrap();
                    gemm_mxfp4_int8(black_box(&q), &panel).unwrap()
                })
            });
            group.bench_with_input(BenchmarkId::new("int8_prequantized", &id), &panel, |b, p| {
                b.iter(|| gemm_mxfp4_int8(black_box(&q), black_box(p)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
