//! Kernel and end-to-end benchmarks. Every benchmark id ends in the active
//! execution mode, so
//!
//! ```text
//! cargo bench -p cipherid                          # parallel kernels
//! cargo bench -p cipherid --no-default-features    # sequential kernels
//! ```
//!
//! produce side-by-side entries (`gram_40x8/parallel` vs
//! `gram_40x8/sequential`) in criterion's report for a direct comparison of
//! the two builds.

use std::hint::black_box;

use cipherid::itersolve::{goldschmidt_matrix, laplace_det};
use cipherid::leveled::{Backend, BackendKind, SchemeParams};
use cipherid::protocol::{client_prepare, server_identify, ServerConfig};
use cipherid::regressors::{IoData, TaskSpec};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn backend(max_level: u32) -> Backend {
    Backend::new(BackendKind::Exact, SchemeParams::with_scale(30, max_level)).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn bench_gram(c: &mut Criterion) {
    let b = backend(30);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // At 40 records the entry map stays below the parallel grain and runs on
    // the calling thread in both builds; at 2000 records it splits.
    for records in [40usize, 2000] {
        let m = b.encrypt_matrix(&random_matrix(&mut rng, records, 8));
        let mt = b.transpose(&m);
        let mut group = c.benchmark_group(format!("gram_{records}x8"));
        group.bench_function(mode(), |bencher| {
            bencher.iter(|| b.mat_mul(black_box(&mt), black_box(&m)).unwrap())
        });
        group.finish();
    }
}

fn bench_pseudoinverse(c: &mut Criterion) {
    let b = backend(30);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = random_matrix(&mut rng, 40, 8);
    let alpha = 1.9 / (m.transpose() * &m).trace();
    let f0 = b.encrypt_matrix(&(alpha * m.transpose()));
    let ct_m = b.encrypt_matrix(&m);
    let h0 = b.mat_mul(&f0, &ct_m).unwrap();
    let mut group = c.benchmark_group("pseudoinverse_12_steps_8x40");
    group.bench_function(mode(), |bencher| {
        bencher.iter(|| goldschmidt_matrix(&b, black_box(&f0), black_box(&h0), 12).unwrap())
    });
    group.finish();
}

fn bench_laplace_det(c: &mut Criterion) {
    let b = backend(30);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = b.encrypt_matrix(&random_matrix(&mut rng, 7, 7));
    let mut group = c.benchmark_group("laplace_det_7x7");
    group.bench_function(mode(), |bencher| {
        bencher.iter(|| laplace_det(&b, black_box(&a)).unwrap())
    });
    group.finish();
}

fn bench_identify(c: &mut Criterion) {
    // A third-order SISO plant driven by white noise; enough samples for the
    // transfer-function task at its default dimensions.
    let samples = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f64> = (0..samples).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; samples];
    for k in 0..samples - 3 {
        y[k + 3] = 0.3 * y[k + 2] - 0.2 * y[k + 1] + 0.1 * y[k] + u[k + 2] + 0.4 * u[k + 1]
            - 0.3 * u[k];
    }
    let data = IoData::new(
        DMatrix::from_column_slice(samples, 1, &u),
        DMatrix::from_column_slice(samples, 1, &y),
    )
    .unwrap();
    let task = TaskSpec::TransferFunction { n: 3, m: 2 };
    let b = backend(23);
    let req = client_prepare(&data, &task, 1e-3, &b).unwrap();
    let config = ServerConfig::default();

    let mut group = c.benchmark_group("identify_tf_l20");
    group.sample_size(10);
    group.bench_function(mode(), |bencher| {
        bencher.iter(|| server_identify(black_box(&req), black_box(&config)).unwrap())
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_gram,
    bench_pseudoinverse,
    bench_laplace_det,
    bench_identify
);
criterion_main!(kernels);
