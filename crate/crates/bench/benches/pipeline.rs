use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tat_bench::{default_model, default_scene, model_input};
use tat_core::model::{backward, forward};
use tat_core::synth::generate_scene;
use tat_core::trajectory::{cluster_descriptors, hod_descriptor};
use tat_core::{bi_mhm, grid_sample, BenchmarkSpec, FrameSequence};

fn tokens(c: &mut Criterion) {
    let scene = default_scene();
    c.bench_function("grid_sample", |b| b.iter(|| grid_sample(black_box(&scene.tracks), &scene.features)));
    let hods: Vec<_> = scene.tracks.trajectories.iter().map(hod_descriptor).collect();
    c.bench_function("hod_clustering", |b| b.iter(|| cluster_descriptors(black_box(&hods), 8)));
    let spec = BenchmarkSpec::default();
    c.bench_function("generate_scene", |b| b.iter(|| generate_scene(black_box(&spec), 3, 1)));
}

fn matching(c: &mut Criterion) {
    let seq = |phase: f64| {
        let data = (0..8 * 32).map(|k| (k as f64 * 0.37 + phase).sin()).collect();
        FrameSequence::new(8, 32, data).unwrap()
    };
    let (q, s) = (seq(0.0), seq(1.0));
    c.bench_function("bi_mhm_8x8", |b| b.iter(|| bi_mhm(black_box(&q), black_box(&s))));
}

fn model(c: &mut Criterion) {
    let scene = default_scene();
    let ckpt = default_model();
    let cfg = ckpt.config;
    let mut group = c.benchmark_group("model");
    group.sample_size(20);
    for points in [64, 256] {
        let (tats, mask) = model_input(&scene, points);
        group.bench_with_input(BenchmarkId::new("forward", points), &points, |b, _| {
            b.iter(|| forward(black_box(&tats), &mask, &ckpt.params, &cfg))
        });
        let gf = vec![0.01f32; tats.num_frames * cfg.dim];
        let gl = vec![0.1f32; cfg.num_base_classes];
        group.bench_with_input(BenchmarkId::new("backward", points), &points, |b, _| {
            b.iter(|| backward(black_box(&tats), &mask, &ckpt.params, &cfg, &gf, &gl))
        });
    }
    group.finish();
}

criterion_group!(benches, tokens, matching, model);
criterion_main!(benches);
