use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nlg_bench::fixture;
use nlg_core::{energy_total, minimize_gnc, PairPlan, Problem, Schedule};

fn energy_1d(c: &mut Criterion) {
    let mut g = c.benchmark_group("energy_1d");
    for n in [256, 1024, 4096] {
        let (f, u) = fixture(1, n);
        let eps = 8.0 / n as f64;
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| energy_total(&f, &u, u.domain.all(), eps, 2.0).unwrap().total)
        });
    }
    g.finish();
}

fn energy_2d(c: &mut Criterion) {
    let mut g = c.benchmark_group("energy_2d");
    g.sample_size(20);
    for n in [32, 64, 128] {
        let (f, u) = fixture(2, n);
        let eps = 4.0 / n as f64;
        g.bench_with_input(BenchmarkId::new("full", n), &n, |b, _| {
            b.iter(|| energy_total(&f, &u, u.domain.all(), eps, 2.0).unwrap().total)
        });
        let plan = PairPlan::new(&u.domain, u.domain.all(), eps, 2.0).unwrap();
        g.bench_with_input(BenchmarkId::new("planned", n), &n, |b, _| b.iter(|| plan.energy(&f, black_box(&u)).unwrap()));
    }
    g.finish();
}

fn gnc_1d(c: &mut Criterion) {
    let mut g = c.benchmark_group("gnc_1d");
    g.sample_size(10);
    let (f, u) = fixture(1, 256);
    let eps = 8.0 / 256.0;
    let free = u.domain.box_mask(&[0.125], &[0.875]).unwrap();
    let p = Problem::free(&u.domain, &free, 1, eps, 1.0).unwrap();
    g.bench_function("n256", |b| b.iter(|| minimize_gnc(&f, &p, Some(&u), &Schedule::default()).unwrap().value));
    g.finish();
}

criterion_group!(benches, energy_1d, energy_2d, gnc_1d);
criterion_main!(benches);
