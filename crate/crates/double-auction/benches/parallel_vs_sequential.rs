//! Compares the sequential and rayon-backed engines on the two heaviest
//! exact-mode workloads: the marginal-price expectation behind the weak
//! budget-balance mechanism, and a full harness ratio measurement. Run with
//! `cargo bench`; without the `parallel` feature only the sequential arm
//! is measured.

use std::collections::BTreeSet;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use double_auction::market::Constraint;
use double_auction::matroid::Matroid;
use double_auction::pricing::MatroidWbbPricing;
use double_auction::rational::{rat, rat_int};
use double_auction::{
    expected_ratio, Distribution, Engine, Instance, Mechanism, OrderPolicy, Parallelism,
};

/// Five two-point buyers and two two-point sellers under a rank-2 cap:
/// 2^7 = 128 profiles, enough work per expectation for the thread pool
/// to matter while staying far under the exact-mode cap.
fn bench_instance() -> Arc<Instance> {
    let coin = |a: i64, b: i64| {
        Distribution::scalar(vec![(rat_int(a), rat(1, 2)), (rat_int(b), rat(1, 2))])
            .expect("valid distribution")
    };
    let buyers = vec![coin(1, 9), coin(2, 7), coin(0, 5), coin(3, 8), coin(1, 6)];
    let sellers = vec![coin(0, 2), coin(1, 3)];
    let constraint = Constraint::Matroid(Matroid::uniform(5, 2).expect("rank fits"));
    Arc::new(Instance::unit_market(buyers, sellers, constraint).expect("valid market"))
}

fn engines() -> Vec<(&'static str, Parallelism)> {
    let mut list = vec![("sequential", Parallelism::Sequential)];
    #[cfg(feature = "parallel")]
    list.push(("parallel", Parallelism::Parallel));
    list
}

/// One cold-cache marginal-price expectation: enumerate every profile and
/// solve the extended-matroid optimum in each.
fn wbb_expected_opt(c: &mut Criterion) {
    let instance = bench_instance();
    let mut group = c.benchmark_group("wbb-expected-opt");
    group.sample_size(20);
    for (label, parallelism) in engines() {
        let engine = Engine::exact_default().with_parallelism(parallelism);
        group.bench_with_input(BenchmarkId::from_parameter(label), &engine, |b, engine| {
            b.iter(|| {
                let pricing = MatroidWbbPricing::new(Arc::clone(&instance), *engine)
                    .expect("matroid market");
                black_box(pricing.expected_opt_given(&BTreeSet::new()).expect("within cap"))
            })
        });
    }
    group.finish();
}

/// A full ratio measurement against random arrival orders, rebuilding the
/// mechanism each iteration so its threshold caches start cold.
fn ratio_random_orders(c: &mut Criterion) {
    let instance = bench_instance();
    let policy = OrderPolicy::Random { seed: 7, trials: 8 };
    let mut group = c.benchmark_group("ratio-random-orders");
    group.sample_size(10);
    for (label, parallelism) in engines() {
        let engine = Engine::exact_default().with_parallelism(parallelism);
        group.bench_with_input(BenchmarkId::from_parameter(label), &engine, |b, engine| {
            b.iter(|| {
                let prepared = Mechanism::MatroidSbb
                    .prepare(&instance, *engine)
                    .expect("matroid market");
                black_box(expected_ratio(&prepared, &policy).expect("measurable"))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, wbb_expected_opt, ratio_random_orders);
criterion_main!(benches);
