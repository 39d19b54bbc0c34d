//! The frozen front end: tracks and patch features to TAT tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};
use crate::features::{grid_sample, PatchTokenGrid, TatTensor};
use crate::synth::no_points_tokens;
use crate::trajectory::{
    deduplicate, sample_trajectories, uniform_frames, DedupConfig, SamplingKind, SamplingStrategy, TrajectorySet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Frames kept per clip, spread evenly. `None` keeps all.
    pub frames: Option<usize>,
    /// Grid size the tracks were initialized with; sets the default
    /// deduplication threshold of one cell width.
    pub grid_size: usize,
    pub dedup_delta: Option<f64>,
    pub point_limit: usize,
    pub strategy: SamplingKind,
    /// Static patch tokens instead of trajectories.
    pub no_points: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            frames: None,
            grid_size: 16,
            dedup_delta: None,
            point_limit: 256,
            strategy: SamplingKind::Random,
            no_points: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.point_limit == 0 {
            problems.push("point limit must be at least 1".to_string());
        }
        if self.grid_size == 0 {
            problems.push("grid size must be at least 1".into());
        }
        if let Some(d) = self.dedup_delta {
            if !(d >= 0.0 && d.is_finite()) {
                problems.push(format!("dedup delta must be non-negative, got {d}"));
            }
        }
        if self.frames == Some(0) {
            problems.push("frames must be positive".into());
        }
        match SamplingStrategy::new(self.strategy, self.point_limit.max(1), 0) {
            Err(TatError::Config(m)) => problems.push(m),
            Err(e) => problems.push(e.to_string()),
            Ok(_) => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TatError::Config(problems.join("; ")))
        }
    }
}

/// Stable per-video seed, so a video always yields the same tokens.
pub fn video_seed(seed: u64, video_id: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in video_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn build_tokens(set: &TrajectorySet, grid: &PatchTokenGrid, cfg: &PipelineConfig) -> Result<TatTensor> {
    let (set, grid) = match cfg.frames {
        Some(t) if t != set.num_frames => {
            let frames = uniform_frames(set.num_frames, t)?;
            (set.select_frames(&frames)?, grid.select_frames(&frames)?)
        }
        _ => (set.clone(), grid.clone()),
    };
    if cfg.no_points {
        return no_points_tokens(&grid, cfg.point_limit);
    }
    if cfg.grid_size == 0 {
        return Err(TatError::Config("grid size must be positive".into()));
    }
    let dedup = match cfg.dedup_delta {
        Some(d) => DedupConfig::new(d)?,
        None => DedupConfig::for_grid(set.frame_width, cfg.grid_size),
    };
    let kept = deduplicate(&set, &dedup);
    let strategy = SamplingStrategy::new(cfg.strategy, cfg.point_limit, video_seed(cfg.seed, &set.video_id))?;
    let sampled = sample_trajectories(&kept, &strategy)?;
    grid_sample(&sampled, &grid)
}
