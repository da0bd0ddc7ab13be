use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vidqa::changepoint::{pelt_head, PeltConfig};
use vidqa::embseg::GramMatrix;
use vidqa::features::{extract_features, SyntheticEmbedder};
use vidqa::ingest::{decode_frames, uniform_sample, SyntheticVideo};
use vidqa::novelty::{novelty_signal, NoveltyConfig};
use vidqa::partition::min_segment_length;
use vidqa::pipeline::{partition_video, PartitionConfig};
use vidqa::selection::allocate_frames;
use vidqa::Exec;

const SCHEDULES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn video() -> SyntheticVideo {
    SyntheticVideo::with_cuts(180.0, 200, &[25.0, 60.0, 95.0, 130.0, 160.0])
}

fn features(c: &mut Criterion) {
    let source = video().source().unwrap();
    let grid = uniform_sample(&source, 200).unwrap();
    let frames = decode_frames(&source, &grid, Exec::Sequential).unwrap();
    let embedder = SyntheticEmbedder::default();
    let mut group = c.benchmark_group("extract_features");
    for (name, exec) in SCHEDULES {
        group.bench_function(name, |b| {
            b.iter(|| extract_features(black_box(&frames), &embedder, exec).unwrap())
        });
    }
    group.finish();
}

fn pelt(c: &mut Criterion) {
    let source = video().source().unwrap();
    let grid = uniform_sample(&source, 200).unwrap();
    let frames = decode_frames(&source, &grid, Exec::Sequential).unwrap();
    let feats = extract_features(&frames, &SyntheticEmbedder::default(), Exec::Sequential).unwrap();
    let signal = novelty_signal(&feats, &NoveltyConfig::default()).unwrap().signal;
    let lmin = min_segment_length(180.0, 2.0);
    let cfg = PeltConfig::default();
    let mut group = c.benchmark_group("pelt_head");
    for (name, exec) in SCHEDULES {
        group.bench_function(name, |b| b.iter(|| pelt_head(black_box(&signal), lmin, 180.0, &cfg, exec)));
    }
    group.finish();
}

fn gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_matrix");
    for q in [64usize, 180] {
        let vectors: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                let v: Vec<f64> = (0..64).map(|d| ((i * 31 + d * 7) % 17) as f64 - 8.0).collect();
                vidqa::stats::unit(&v)
            })
            .collect();
        for (name, exec) in SCHEDULES {
            group.bench_with_input(BenchmarkId::new(name, q), &vectors, |b, v| {
                b.iter(|| GramMatrix::new(black_box(v), exec))
            });
        }
    }
    group.finish();
}

fn partition(c: &mut Criterion) {
    let source = video().source().unwrap();
    let embedder = SyntheticEmbedder::default();
    let cfg = PartitionConfig::default();
    let mut group = c.benchmark_group("partition_video");
    group.sample_size(10);
    for (name, exec) in SCHEDULES {
        group.bench_function(name, |b| {
            b.iter(|| partition_video(black_box(&source), &embedder, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn allocation(c: &mut Criterion) {
    let cases: Vec<Vec<f64>> = (0..1000u64)
        .map(|s| (0..6).map(|k| (((s * 7 + k * 13) % 100) as f64) / 50.0 - 1.0).collect())
        .collect();
    let mut group = c.benchmark_group("allocate_frames");
    for (name, exec) in SCHEDULES {
        group.bench_function(name, |b| {
            b.iter(|| exec.map(&cases, |s| allocate_frames(black_box(s), 16, 0.8, 7).counts))
        });
    }
    group.finish();
}

criterion_group!(benches, features, pelt, gram, partition, allocation);
criterion_main!(benches);
