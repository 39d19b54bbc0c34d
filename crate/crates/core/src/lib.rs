//! Trajectory-aligned space-time tokens for few-shot action recognition.
//!
//! The pipeline runs in this order:
//!
//! 1. [`trajectory`]: grid-initialized point tracks, deduplicated and
//!    subsampled to a fixed budget.
//! 2. [`features`]: per-frame patch tokens, sampled at every track point to
//!    form trajectory-aligned tokens.
//! 3. [`model`]: a masked divided space-time transformer producing a
//!    per-frame embedding sequence and base-class logits.
//! 4. [`matching`]: bidirectional mean Hausdorff matching of query and
//!    support sequences.
//! 5. [`episodic`]: N-way K-shot episodes, losses, training and evaluation.
//!
//! [`synth`] generates a labeled synthetic motion benchmark for all of it.

pub mod episodic;
pub mod error;
pub mod features;
mod io_util;
pub mod matching;
pub mod model;
pub mod real;
pub mod synth;
pub mod trajectory;

pub use episodic::{
    evaluate, sample_episode, train, DatasetManifest, Episode, EvalConfig, EvalResult, LossConfig, PipelineConfig,
    Split, TrainConfig, VideoSource,
};
pub use error::{Result, TatError};
pub use features::{grid_sample, PatchTokenGrid, TatTensor};
pub use matching::{bi_mhm, classify_query, frame_distance, EpisodeLogits, FrameSequence};
pub use model::{build_mask, Checkpoint, ModelConfig, ModelOutput, ParameterSet, TemporalMask};
pub use real::Real;
pub use synth::{generate_benchmark, BenchmarkSpec, MotionSpec, SyntheticSource};
pub use trajectory::{Point2D, Trajectory, TrajectorySet};
