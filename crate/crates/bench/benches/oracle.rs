use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neurosketch::data::gen_uniform;
use neurosketch::query::{label_queries, oracle_answer, sample_queries};
use neurosketch::{Aggregation, QuerySpec, RangeMode};

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    for agg in [Aggregation::Count, Aggregation::Avg, Aggregation::Median] {
        let ds = gen_uniform(100_000, 4, 1).unwrap();
        let spec = QuerySpec::axis(agg, 3, 2);
        let qs = sample_queries(&spec, 4, 64, 2, RangeMode::Uniform).unwrap();
        let mut i = 0;
        group.bench_with_input(BenchmarkId::new("single query", agg), &qs, |b, qs| {
            b.iter(|| {
                i = (i + 1) % qs.len();
                black_box(oracle_answer(&ds, &qs[i], &spec).unwrap())
            })
        });
        group.bench_with_input(BenchmarkId::new("label 64 queries", agg), &qs, |b, qs| {
            b.iter(|| black_box(label_queries(&ds, qs, &spec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, oracle);
criterion_main!(benches);
