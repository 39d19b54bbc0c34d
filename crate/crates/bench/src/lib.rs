//! Shared fixtures for the criterion benchmarks.

use tat_core::episodic::{build_tokens, PipelineConfig};
use tat_core::synth::{generate_scene, Scene};
use tat_core::{BenchmarkSpec, Checkpoint, ModelConfig, TatTensor, TemporalMask};

/// One scene from the default benchmark.
pub fn default_scene() -> Scene {
    generate_scene(&BenchmarkSpec::default(), 0, 0).expect("default spec is valid")
}

/// Model input for `scene` with at most `points` trajectories.
pub fn model_input(scene: &Scene, points: usize) -> (TatTensor, TemporalMask) {
    let cfg = PipelineConfig {
        point_limit: points,
        ..PipelineConfig::default()
    };
    let tats = build_tokens(&scene.tracks, &scene.features, &cfg).expect("tokens");
    let mask = TemporalMask::from_tats(&tats);
    (tats, mask)
}

pub fn default_model() -> Checkpoint {
    Checkpoint::init(ModelConfig::default()).expect("default model is valid")
}
