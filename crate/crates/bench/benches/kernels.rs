use ckn_core::minkowski::MinkowskiNorm;
use ckn_core::qengine::q_e;
use ckn_core::symmetrize::{random_grid_function, RearrangementPlan};
use ckn_core::variational::{rayleigh_quotient, GridSpec, RadialProfile};
use ckn_core::make_params;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

fn constant(c: &mut Criterion) {
    c.bench_function("sharp_constant n=3 a=0.5", |b| b.iter(|| make_params(black_box(3), black_box(0.5)).unwrap().sharp_constant()));
}

fn q_euclidean(c: &mut Criterion) {
    let p = make_params(3, 0.5).unwrap();
    c.bench_function("q_e lambda=1", |b| b.iter(|| q_e(&p, black_box(1.0)).unwrap()));
}

fn rayleigh(c: &mut Criterion) {
    let p = make_params(3, 0.0).unwrap();
    let prof = RadialProfile::extremal(&p, 1.0, GridSpec::default().build(1.0)).unwrap();
    c.bench_function("rayleigh_quotient 2000 nodes", |b| b.iter(|| rayleigh_quotient(&p, black_box(&prof)).unwrap()));
}

fn rearrangement(c: &mut Criterion) {
    let norm = MinkowskiNorm::lq(3, 4.0).unwrap();
    let plan = RearrangementPlan::new(&norm, 32, 1.0).unwrap();
    let u = random_grid_function(&norm, 32, 1.0, 1).unwrap();
    c.bench_function("symmetrize 32^3", |b| b.iter(|| plan.apply(black_box(&u)).unwrap()));
}

criterion_group!(benches, constant, q_euclidean, rayleigh, rearrangement);
criterion_main!(benches);
