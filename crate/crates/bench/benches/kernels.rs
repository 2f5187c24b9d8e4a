use bytower_bench::{doubling_plan, doubling_tower};
use bytower_core::geometric::{decompose, transfer_apply, water_fill, DecomposeOptions, Density};
use bytower_core::rational::{rat, Rational};
use bytower_core::statistics::{birkhoff, cos_observable, BitOrbit};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn transfer(c: &mut Criterion) {
    let t = doubling_tower();
    let psi = Density::reference(&t, 3).unwrap();
    c.bench_function("transfer_apply depth 3", |b| b.iter(|| transfer_apply(&t, black_box(&psi), 1)));
}

fn decomposition(c: &mut Criterion) {
    let t = doubling_tower();
    let plan = doubling_plan();
    let opts = DecomposeOptions { mass_resolution: 1e-2, ..Default::default() };
    let mut g = c.benchmark_group("decompose");
    g.sample_size(10);
    g.bench_function("resolution 1e-2", |b| b.iter(|| decompose(&t, &plan, opts).unwrap()));
    g.finish();
}

fn water(c: &mut Criterion) {
    let q: Vec<Rational> = (1..=12).map(|j| rat(1, j + 1)).collect();
    let total: Rational = q.iter().cloned().sum();
    let p: Vec<Rational> = (0..12).map(|_| &total / Rational::from_integer(12.into())).collect();
    c.bench_function("water_fill 12", |b| b.iter(|| water_fill(black_box(&p), black_box(&q))));
}

fn birkhoff_sums(c: &mut Criterion) {
    let orbit = BitOrbit::new(1, 0, 10_000);
    let checkpoints: Vec<usize> = (1..=10).map(|i| i * 1000).collect();
    c.bench_function("birkhoff 1e4", |b| b.iter(|| birkhoff(&orbit, cos_observable, black_box(&checkpoints))));
}

criterion_group!(benches, transfer, decomposition, water, birkhoff_sums);
criterion_main!(benches);
