//! Masked divided space-time transformer over trajectory-aligned tokens.
//!
//! Token layout: row 0 is the CLS token, row `1 + t * N + i` is trajectory
//! `i` at frame `t`. Each block runs temporal attention (a trajectory's valid
//! frames attend to each other), then spatial attention (a frame's valid
//! tokens plus CLS attend to each other, with the CLS update averaged over
//! frames), then an MLP. All three are pre-norm residual. Masked tokens are
//! zero, never attended to and never updated.

mod checkpoint;
mod net;
mod ops;
mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use net::{backward, backward_with_cache, embed_tokens, forward, forward_with_cache, ForwardCache, InputGrad};
pub use params::{parameter_layout, Param, ParameterSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};
use crate::features::TatTensor;
use crate::real::Real;
use crate::trajectory::TrajectorySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub num_base_classes: usize,
    pub input_dim: usize,
    /// Size of the learned temporal position table.
    pub max_frames: usize,
    pub seed: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 32,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            num_base_classes: 5,
            input_dim: 64,
            max_frames: 8,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A tiny model used by gradient checks.
    pub fn small(input_dim: usize, max_frames: usize, num_base_classes: usize) -> Self {
        ModelConfig {
            dim: 16,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            num_base_classes,
            input_dim,
            max_frames,
            seed: 1,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.dim * self.mlp_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            problems.push(format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.depth == 0 {
            problems.push("depth must be at least 1".to_string());
        }
        if self.mlp_ratio == 0 {
            problems.push("mlp_ratio must be at least 1".to_string());
        }
        if self.num_base_classes < 2 {
            problems.push(format!("need at least 2 base classes, got {}", self.num_base_classes));
        }
        if self.input_dim == 0 || self.max_frames == 0 {
            problems.push("input_dim and max_frames must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TatError::Config(problems.join("; ")))
        }
    }
}

/// `T x N` validity, true from each trajectory's first frame onwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalMask {
    pub num_frames: usize,
    pub num_points: usize,
    pub valid: Vec<bool>,
}

impl TemporalMask {
    pub fn all_valid(num_frames: usize, num_points: usize) -> Self {
        TemporalMask {
            num_frames,
            num_points,
            valid: vec![true; num_frames * num_points],
        }
    }

    pub fn from_tats(tats: &TatTensor) -> Self {
        TemporalMask {
            num_frames: tats.num_frames,
            num_points: tats.num_points,
            valid: tats.valid.clone(),
        }
    }

    pub fn is_valid(&self, frame: usize, point: usize) -> bool {
        self.valid[frame * self.num_points + point]
    }

    /// Each column must be a (possibly empty) run of `false` followed by
    /// `true` only.
    pub fn is_monotone(&self) -> bool {
        (0..self.num_points).all(|i| {
            (1..self.num_frames).all(|t| !self.is_valid(t - 1, i) || self.is_valid(t, i))
        })
    }
}

pub fn build_mask(set: &TrajectorySet) -> TemporalMask {
    let (t_len, n) = (set.num_frames, set.trajectories.len());
    let mut valid = vec![false; t_len * n];
    for (i, traj) in set.trajectories.iter().enumerate() {
        for t in traj.init_frame..t_len {
            valid[t * n + i] = true;
        }
    }
    TemporalMask {
        num_frames: t_len,
        num_points: n,
        valid,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<F> {
    pub num_frames: usize,
    pub dim: usize,
    /// `T x D`: masked mean of final tokens per frame.
    pub frame_embedding: Vec<F>,
    pub cls_logits: Vec<F>,
    /// `(T * N + 1) x D`, CLS first.
    pub full_sequence: Vec<F>,
}

impl<F: Real> ModelOutput<F> {
    pub fn frame(&self, t: usize) -> &[F] {
        &self.frame_embedding[t * self.dim..(t + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Point2D, Trajectory};

    #[test]
    fn mask_from_init_frames() {
        let full = Trajectory::from_points(0, vec![Point2D::new(1.0, 1.0); 8]).unwrap();
        let late = Trajectory::from_points(3, vec![Point2D::new(1.0, 1.0); 5]).unwrap();
        let set = TrajectorySet::new("v", 16, 16, 8, vec![full.clone(), full]).unwrap();
        assert!(build_mask(&set).valid.iter().all(|&v| v));
        let set = TrajectorySet::new("v", 16, 16, 8, vec![late]).unwrap();
        let m = build_mask(&set);
        assert_eq!(m.valid, vec![false, false, false, true, true, true, true, true]);
        assert!(m.is_monotone());
    }

    #[test]
    fn non_monotone_detected() {
        let m = TemporalMask {
            num_frames: 3,
            num_points: 1,
            valid: vec![true, false, true],
        };
        assert!(!m.is_monotone());
    }

    #[test]
    fn config_validation_lists_everything() {
        let cfg = ModelConfig {
            dim: 10,
            heads: 3,
            depth: 0,
            num_base_classes: 1,
            ..ModelConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("heads") && msg.contains("depth") && msg.contains("base classes"));
    }
}
