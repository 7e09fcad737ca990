//! Benchmarks for the hot kernels: cocycle construction, the coboundary
//! solver, the bundle decomposition, and the rank census.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rigidchern_core::cech::{class_coeff, solve_coboundary};
use rigidchern_core::laurent::{build_space, build_space_with_window, SpaceDescriptor};
use rigidchern_core::sampling::{perturbation_window, random_coboundary};
use rigidchern_core::{
    bundle, c1_cocycle, line_bundle_cocycle, total_cohomology_ranks, PAdicContext,
};

fn bench_c1_perturbed(c: &mut Criterion) {
    let ctx = PAdicContext::new(5, 8).unwrap();
    let window = perturbation_window(8, 3);
    let sp = build_space_with_window(&SpaceDescriptor::p2(), &ctx, window, window).unwrap();
    let base = line_bundle_cocycle(&sp, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = base.perturb(&sp, &mut rng, 3, 3).unwrap();
    c.bench_function("c1_cocycle perturbed O(1) on P2", |b| {
        b.iter(|| c1_cocycle(&sp, &u).unwrap())
    });
    let z = c1_cocycle(&sp, &u).unwrap();
    c.bench_function("class_coeff perturbed O(1) on P2", |b| {
        b.iter(|| class_coeff(&sp, &z).unwrap())
    });
}

fn bench_solver(c: &mut Criterion) {
    let ctx = PAdicContext::new(5, 8).unwrap();
    let sp = build_space(&SpaceDescriptor::p2(), &ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = random_coboundary(&sp, 2, &mut rng, 8).unwrap();
    c.bench_function("solve_coboundary degree 2 on P2", |b| {
        b.iter(|| solve_coboundary(&sp, &z).unwrap())
    });
}

fn bench_chern_classes(c: &mut Criterion) {
    let ctx = PAdicContext::new(5, 8).unwrap();
    let sp = build_space(
        &SpaceDescriptor::ProjBundle {
            base_n: 2,
            twists: vec![1, 2],
        },
        &ctx,
    )
    .unwrap();
    c.bench_function("chern_classes O(1)+O(2) over P2", |b| {
        b.iter(|| bundle::chern_classes(&sp).unwrap())
    });
}

fn bench_ranks(c: &mut Criterion) {
    let ctx = PAdicContext::new(5, 8).unwrap();
    let sp = build_space(&SpaceDescriptor::p2(), &ctx).unwrap();
    c.bench_function("rank census of P2", |b| {
        b.iter(|| total_cohomology_ranks(&sp, 4).unwrap())
    });
}

criterion_group!(
    benches,
    bench_c1_perturbed,
    bench_solver,
    bench_chern_classes,
    bench_ranks
);
criterion_main!(benches);
