use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fraclab_bench::{discretization, sine_mass, smooth_vector};
use fraclab_core::spectral::{dense_gevp, min_rayleigh_p, MinimizerOptions};
use fraclab_core::Variant;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    group.sample_size(10);
    for n in [64, 256] {
        group.bench_with_input(BenchmarkId::new("tables", n), &n, |b, &n| {
            b.iter(|| discretization(black_box(n), 0.5, 2.0, Variant::DirichletExterior))
        });
        let disc = discretization(n, 0.5, 2.0, Variant::DirichletExterior);
        group.bench_with_input(BenchmarkId::new("form_p2", n), &n, |b, _| b.iter(|| disc.assemble_form_p2().unwrap()));
    }
    group.finish();
}

fn energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy");
    for p in [1.5, 2.0, 3.0] {
        let disc = discretization(256, 0.5, p, Variant::RegionalNeumann);
        let u = smooth_vector(disc.dim());
        group.bench_with_input(BenchmarkId::new("value", p), &p, |b, _| b.iter(|| disc.energy(black_box(&u)).unwrap()));
        group.bench_with_input(BenchmarkId::new("gradient", p), &p, |b, _| {
            b.iter(|| disc.energy_gradient(black_box(&u)).unwrap())
        });
    }
    group.finish();
}

fn gevp(c: &mut Criterion) {
    let mut group = c.benchmark_group("gevp");
    group.sample_size(10);
    for n in [128, 512] {
        let disc = discretization(n, 0.5, 2.0, Variant::DirichletExterior);
        let a = disc.assemble_form_p2().unwrap().matrix;
        let m = sine_mass(&disc, 0.125).to_dense();
        group.bench_with_input(BenchmarkId::new("values", n), &n, |b, _| {
            b.iter(|| dense_gevp(a.as_ref(), m.as_ref(), false).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("vectors", n), &n, |b, _| {
            b.iter(|| dense_gevp(a.as_ref(), m.as_ref(), true).unwrap())
        });
    }
    group.finish();
}

fn minimizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimizer");
    group.sample_size(10);
    let disc = discretization(128, 0.5, 3.0, Variant::DirichletExterior);
    let mass = sine_mass(&disc, 0.125);
    let opts = MinimizerOptions::default();
    group.bench_function("p3_n128", |b| b.iter(|| min_rayleigh_p(&disc, &mass, disc.params(), &opts).unwrap()));
    group.finish();
}

criterion_group!(benches, assembly, energy, gevp, minimizer);
criterion_main!(benches);
