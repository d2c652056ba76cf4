//! Microbenchmarks for the numeric paths the trainers hammer: fixed-point
//! multiplies, the hybrid int8 dot product, sigmoid lookup/Taylor, and the
//! DMA cost formula.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pimsim_core::activation::{sigmoid_taylor, SigmoidLut};
use pimsim_core::fxp::{hybrid_dot_raw, mul8_exact, mul_q_raw, OverflowMode};
use pimsim_core::machine::CostModel;

fn bench_fxp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: Vec<(i64, i64)> = (0..256)
        .map(|_| (rng.gen_range(-500_000..500_000), rng.gen_range(-1024..1024)))
        .collect();
    c.bench_function("mul_q_raw_q21_10", |b| {
        b.iter(|| {
            let mut acc = 0i64;
            for &(x, w) in &pairs {
                acc ^= mul_q_raw(black_box(x), black_box(w), 10, 32).unwrap();
            }
            acc
        })
    });

    let bytes: Vec<(i64, i64)> =
        (0..256).map(|_| (rng.gen_range(-128..128), rng.gen_range(-128..128))).collect();
    c.bench_function("mul8_exact", |b| {
        b.iter(|| {
            let mut acc = 0i64;
            for &(x, w) in &bytes {
                acc ^= mul8_exact(black_box(x), black_box(w)).unwrap();
            }
            acc
        })
    });

    let xs: Vec<i8> = (0..16).map(|_| rng.gen_range(-127..=127)).collect();
    let ws: Vec<i8> = (0..16).map(|_| rng.gen_range(-127..=127)).collect();
    c.bench_function("hybrid_dot_16", |b| {
        b.iter(|| hybrid_dot_raw(black_box(&xs), black_box(&ws), 4, OverflowMode::Saturate))
    });
}

fn bench_sigmoid(c: &mut Criterion) {
    let lut = SigmoidLut::build();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs: Vec<f64> = (0..256).map(|_| rng.gen_range(-20.0..20.0)).collect();
    c.bench_function("sigmoid_lut_lookup", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &x in &inputs {
                acc += lut.lookup(black_box(x));
            }
            acc
        })
    });
    let cm = CostModel::default();
    c.bench_function("sigmoid_taylor_10_terms", |b| {
        b.iter(|| sigmoid_taylor(black_box(1.25), 10, &cm))
    });
}

fn bench_cost_model(c: &mut Criterion) {
    let cm = CostModel::default();
    c.bench_function("dma_cycles_64k", |b| b.iter(|| cm.dma_cycles(black_box(65536))));
    c.bench_function("kernel_cycles", |b| {
        b.iter(|| cm.kernel_cycles(black_box(1_000_000), black_box(16)))
    });
}

criterion_group!(benches, bench_fxp, bench_sigmoid, bench_cost_model);
criterion_main!(benches);
