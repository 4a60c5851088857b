use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gwb_core::exec::{map_replicas, replica_rng};
use gwb_core::spine::{SpineSampler, WSampler};
use gwb_core::{Execution, OffspringLaw};

fn w_draws(c: &mut Criterion) {
    let law = OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap();
    let ws = WSampler::with_depth(16);
    let mut g = c.benchmark_group("w_draws");
    g.sample_size(20);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), 4000), &4000, |b, &n| {
            b.iter(|| map_replicas(n, exec, |i| ws.sample(&law, &mut replica_rng(1, i)).unwrap()))
        });
    }
    g.finish();
}

fn spine_paths(c: &mut Criterion) {
    let law = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
    let sampler = SpineSampler::fresh(&law);
    let mut g = c.benchmark_group("spine_paths");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), 200), &200, |b, &n| {
            b.iter(|| map_replicas(n, exec, |i| sampler.normalized_path(&mut replica_rng(2, i), 200).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, w_draws, spine_paths);
criterion_main!(benches);
