use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transduce_core::baselines::knn_fit;
use transduce_core::dataset::LabeledSet;
use transduce_core::transduction::{build_difference_index, AnchorSearcher, IndexConfig};
use transduce_core::Execution;

fn random_set(n: usize, d: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let y = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    LabeledSet::new((0..n).map(|i| format!("b{i:05}")).collect(), x, y).unwrap()
}

fn strategies() -> Vec<(&'static str, Execution)> {
    vec![
        ("sequential", Execution::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Execution::Parallel),
    ]
}

fn anchor_search(c: &mut Criterion) {
    let train = random_set(400, 32, 1);
    let queries = random_set(64, 32, 2).x;
    let index = build_difference_index(&train, IndexConfig { m: 1024, ..IndexConfig::default() }).unwrap();
    let searcher = AnchorSearcher::new(&train, &index).unwrap();
    let mut group = c.benchmark_group("anchor_search");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| searcher.select_all(&queries, exec).unwrap())
        });
    }
    group.finish();
}

fn knn(c: &mut Criterion) {
    let train = random_set(4000, 64, 3);
    let queries = random_set(256, 64, 4).x;
    let model = knn_fit(&train, 5).unwrap();
    let mut group = c.benchmark_group("knn_predict");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.predict_all(&queries, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, anchor_search, knn);
criterion_main!(benches);
