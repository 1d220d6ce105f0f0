use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pseudosieve::fields::enumerate_cyclic;
use pseudosieve::largesieve::{duality_check, DyadicInstance};
use pseudosieve::lfunc::{count_zeros_rectangle, hurwitz_zeta, l_value, FlatSharp};
use pseudosieve::sievekit::identity_sweep;
use pseudosieve::{CharacterFamily, Complex64, PseudoCharacterContext, Rectangle};
use pseudosieve_bench::primitive;

fn lfunc(c: &mut Criterion) {
    let s = Complex64::new(0.5, 30.0);
    c.bench_function("hurwitz_zeta(1/2+30i, 0.3)", |b| {
        b.iter(|| hurwitz_zeta(black_box(s), black_box(0.3), 1e-12).unwrap())
    });
    let chi = primitive(47);
    c.bench_function("l_value q=47 at 1/2+30i", |b| {
        b.iter(|| l_value(&chi, black_box(s)).unwrap())
    });
    let fs = FlatSharp::new(&primitive(7), 4.0).unwrap();
    let s = Complex64::new(0.75, 10.0);
    c.bench_function("flat q=7 z=4", |b| b.iter(|| fs.flat(black_box(s)).unwrap()));
}

fn zeros(c: &mut Criterion) {
    let mut g = c.benchmark_group("zeros");
    g.sample_size(10);
    let chi = primitive(11);
    let rect = Rectangle::new(0.5, 20.0).unwrap();
    g.bench_function("count q=11 T=20", |b| {
        b.iter(|| count_zeros_rectangle(&chi, rect).unwrap())
    });
    g.finish();
}

fn sieve(c: &mut Criterion) {
    let mut g = c.benchmark_group("sieve");
    g.sample_size(10);
    let ctx = PseudoCharacterContext::new(primitive(5), 0.1, 4.0, 60).unwrap();
    g.bench_function("identity sweep q=5 R=60 n<=1e4", |b| {
        b.iter(|| identity_sweep(&ctx, 10_000).unwrap())
    });
    let fam = CharacterFamily::primitive(5).unwrap();
    let inst = DyadicInstance::new(&fam, 15, 0.1, 4.0, 50, 1.5).unwrap();
    g.bench_function("duality q=5 R=15 N'=50", |b| {
        b.iter(|| duality_check(&inst, 0, 1e-6, 20))
    });
    g.finish();
}

fn fields(c: &mut Criterion) {
    let mut g = c.benchmark_group("fields");
    g.sample_size(10);
    g.bench_function("enumerate cubic D<=1e8", |b| {
        b.iter(|| enumerate_cyclic(3, black_box(1e8)).unwrap().len())
    });
    g.finish();
}

criterion_group!(benches, lfunc, zeros, sieve, fields);
criterion_main!(benches);
