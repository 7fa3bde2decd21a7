use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use facetrank_bench::random_pool;
use facetrank_core::triplets::enumerate_triplets;
use facetrank_core::Facet;

fn triplets(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_triplets");
    for n in [10, 30, 100] {
        let pool = random_pool(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &pool, |b, p| {
            b.iter(|| enumerate_triplets(black_box(p), "seed", Facet::Method))
        });
    }
    group.finish();
}

criterion_group!(benches, triplets);
criterion_main!(benches);
