use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hdboot::bootstrap::{gmb_draws_multi, gpb_draws_multi, ks_sorted};
use hdboot::harness::Design;
use hdboot::{lp_norm, CovEstimator, LpExponent, MarginalKind, RngSeed};

fn design(d: usize) -> Design {
    Design::new(200, d, (d / 100).max(1), 0.8, MarginalKind::UniformSym, true, &RngSeed::new(1)).unwrap()
}

fn norms(c: &mut Criterion) {
    let x: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
    let mut g = c.benchmark_group("lp_norm_d1000");
    for p in LpExponent::standard_set() {
        g.bench_function(p.label(), |b| b.iter(|| lp_norm(black_box(&x), p).unwrap()));
    }
    g.finish();
}

fn engines(c: &mut Criterion) {
    let ps = LpExponent::standard_set();
    let mut g = c.benchmark_group("bootstrap_b500");
    g.sample_size(10);
    for d in [100usize, 200] {
        let des = design(d);
        let x = des.sample(&RngSeed::new(2)).unwrap();
        let naive = CovEstimator::Naive.estimate(&x, &RngSeed::new(3)).unwrap();
        g.bench_with_input(BenchmarkId::new("gpb", d), &naive, |b, s| {
            b.iter(|| gpb_draws_multi(s, &ps, 500, &RngSeed::new(4)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gmb", d), &x, |b, x| {
            b.iter(|| gmb_draws_multi(x, &ps, 500, &RngSeed::new(5)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("corr_cv_estimate", d), &x, |b, x| {
            b.iter(|| CovEstimator::correlation_cv_default().estimate(x, &RngSeed::new(6)).unwrap())
        });
    }
    g.finish();
}

fn ks(c: &mut Criterion) {
    let a: Vec<f64> = (0..10_000).map(|i| i as f64 * 0.5).collect();
    let b: Vec<f64> = (0..10_000).map(|i| i as f64 * 0.5 + 0.25).collect();
    c.bench_function("ks_sorted_1e4", |bench| bench.iter(|| ks_sorted(black_box(&a), black_box(&b))));
}

criterion_group!(benches, norms, engines, ks);
criterion_main!(benches);
