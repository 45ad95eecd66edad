//! Parallel vs sequential throughput on the batch pipeline entry points.
//!
//! Every parallel entry point has a `_seq` twin with identical output; these
//! benches compare the two on decomposition and corpus-level prediction.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use topro::decode::{predict_split, predict_split_seq, DecodeOptions};
use topro::pvp::{decompose_split, decompose_split_seq};
use topro::scoring::TinyTrainableScorer;
use topro::synth;

fn bench_decompose(c: &mut Criterion) {
    let task = synth::SyntheticTask::new(5);
    let mut group = c.benchmark_group("decompose_split");
    for &sentences in &[200usize, 1000] {
        let split = synth::separable_split(&task, "train", "en", sentences, 8..=32, 200, 3);
        group.bench_with_input(BenchmarkId::new("parallel", sentences), &split, |b, split| {
            b.iter(|| decompose_split(&task.template, black_box(split), Some(128)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", sentences), &split, |b, split| {
            b.iter(|| decompose_split_seq(&task.template, black_box(split), Some(128)).unwrap())
        });
    }
    group.finish();
}

fn bench_predict(c: &mut Criterion) {
    let task = synth::SyntheticTask::new(5);
    let scorer = TinyTrainableScorer::new(1024, &task.tagset, &task.verbalizer, 7).unwrap();
    let options = DecodeOptions::default();
    let mut group = c.benchmark_group("predict_split");
    for &sentences in &[100usize, 400] {
        let split = synth::separable_split(&task, "test", "en", sentences, 8..=24, 200, 11);
        group.bench_with_input(BenchmarkId::new("parallel", sentences), &split, |b, split| {
            b.iter(|| {
                predict_split(&scorer, black_box(split), &task.template, &task.verbalizer, &options)
                    .unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", sentences), &split, |b, split| {
            b.iter(|| {
                predict_split_seq(
                    &scorer,
                    black_box(split),
                    &task.template,
                    &task.verbalizer,
                    &options,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_decompose, bench_predict);
criterion_main!(benches);
