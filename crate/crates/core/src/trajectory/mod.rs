//! Point trajectories: grid initialization, deduplication, descriptors and
//! subsampling.
//!
//! Frames are indexed from 0. A trajectory initialized at frame `q` carries
//! one point for every frame in `q..num_frames`.

mod cluster;
mod hod;
mod io;
mod motion;
mod sampling;

pub use cluster::cluster_descriptors;
pub use hod::{hod_descriptor, trajectory_length, HodDescriptor, HOD_BINS};
pub use io::{export_tracks, import_tracks, read_tracks, write_tracks};
pub use motion::{synthetic_track, Motion};
pub use sampling::{sample_trajectories, SamplingKind, SamplingStrategy};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Clamps into `[0, width) x [0, height)`. Returns whether clamping moved
    /// the point.
    pub fn clamp_to(&mut self, width: u32, height: u32) -> bool {
        let max_x = f64::from(width).next_down();
        let max_y = f64::from(height).next_down();
        let (x, y) = (self.x.clamp(0.0, max_x), self.y.clamp(0.0, max_y));
        let moved = x != self.x || y != self.y;
        self.x = x;
        self.y = y;
        moved
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub init_frame: usize,
    pub points: Vec<Point2D>,
    pub visible: Vec<bool>,
}

impl Trajectory {
    pub fn new(init_frame: usize, points: Vec<Point2D>, visible: Vec<bool>) -> Result<Self> {
        if points.is_empty() {
            return Err(TatError::Validation("trajectory has no points".into()));
        }
        if points.len() != visible.len() {
            return Err(TatError::Validation(format!(
                "trajectory has {} points but {} visibility flags",
                points.len(),
                visible.len()
            )));
        }
        Ok(Trajectory {
            init_frame,
            points,
            visible,
        })
    }

    /// Builds a fully visible trajectory.
    pub fn from_points(init_frame: usize, points: Vec<Point2D>) -> Result<Self> {
        let visible = vec![true; points.len()];
        Self::new(init_frame, points, visible)
    }

    /// Point at absolute frame index, if the trajectory covers it.
    pub fn point_at(&self, frame: usize) -> Option<Point2D> {
        frame
            .checked_sub(self.init_frame)
            .and_then(|k| self.points.get(k).copied())
    }

    pub fn num_frames(&self) -> usize {
        self.init_frame + self.points.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub video_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    pub num_frames: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(
        video_id: impl Into<String>,
        frame_width: u32,
        frame_height: u32,
        num_frames: usize,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let set = TrajectorySet {
            video_id: video_id.into(),
            frame_width,
            frame_height,
            num_frames,
            trajectories,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(TatError::Validation("num_frames must be at least 1".into()));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(TatError::Validation("frame size must be non-zero".into()));
        }
        for (i, traj) in self.trajectories.iter().enumerate() {
            if traj.init_frame >= self.num_frames {
                return Err(TatError::Validation(format!(
                    "track {i}: init frame {} outside [0, {})",
                    traj.init_frame, self.num_frames
                )));
            }
            let expected = self.num_frames - traj.init_frame;
            if traj.points.len() != expected || traj.visible.len() != expected {
                return Err(TatError::Validation(format!(
                    "track {i}: expected {expected} points for q={}, T={}, found {} points and {} flags",
                    traj.init_frame,
                    self.num_frames,
                    traj.points.len(),
                    traj.visible.len()
                )));
            }
            if traj.points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(TatError::Validation(format!("track {i}: non-finite coordinate")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Same metadata, different trajectory list.
    pub fn with_trajectories(&self, trajectories: Vec<Trajectory>) -> TrajectorySet {
        TrajectorySet {
            video_id: self.video_id.clone(),
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            num_frames: self.num_frames,
            trajectories,
        }
    }

    /// Restricts the clip to `frames` (strictly increasing). A trajectory
    /// starts at the first kept frame at or after its init frame and is
    /// dropped if there is none.
    pub fn select_frames(&self, frames: &[usize]) -> Result<TrajectorySet> {
        check_frame_selection(frames, self.num_frames)?;
        let mut out = Vec::with_capacity(self.trajectories.len());
        for traj in &self.trajectories {
            let Some(first) = frames.iter().position(|&f| f >= traj.init_frame) else {
                continue;
            };
            let kept = &frames[first..];
            let points = kept.iter().map(|&f| traj.points[f - traj.init_frame]).collect();
            let visible = kept.iter().map(|&f| traj.visible[f - traj.init_frame]).collect();
            out.push(Trajectory::new(first, points, visible)?);
        }
        TrajectorySet::new(&self.video_id, self.frame_width, self.frame_height, frames.len(), out)
    }
}

/// `count` frame indices spread evenly over `0..total`, first and last
/// included.
pub fn uniform_frames(total: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > total {
        return Err(TatError::Argument(format!("cannot pick {count} frames from {total}")));
    }
    if count == 1 {
        return Ok(vec![0]);
    }
    Ok((0..count)
        .map(|k| ((k * (total - 1)) as f64 / (count - 1) as f64).round() as usize)
        .collect())
}

pub(crate) fn check_frame_selection(frames: &[usize], total: usize) -> Result<()> {
    if frames.is_empty() || frames.windows(2).any(|w| w[0] >= w[1]) || frames[frames.len() - 1] >= total {
        return Err(TatError::Argument(format!(
            "frame selection {frames:?} must be strictly increasing within 0..{total}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridInitConfig {
    grid_size: usize,
    reinit_stride: usize,
    num_frames: usize,
}

impl GridInitConfig {
    pub fn new(grid_size: usize, reinit_stride: usize, num_frames: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(TatError::Config("grid size must be at least 1".into()));
        }
        if num_frames == 0 {
            return Err(TatError::Config("num_frames must be at least 1".into()));
        }
        if reinit_stride == 0 || reinit_stride > num_frames {
            return Err(TatError::Config(format!(
                "reinit stride {reinit_stride} outside [1, {num_frames}]"
            )));
        }
        Ok(GridInitConfig {
            grid_size,
            reinit_stride,
            num_frames,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn reinit_stride(&self) -> usize {
        self.reinit_stride
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn init_frames(&self) -> impl Iterator<Item = usize> {
        (0..self.num_frames).step_by(self.reinit_stride)
    }
}

/// Query points at grid cell centers on every initialization frame.
pub fn init_grid_queries(
    config: &GridInitConfig,
    frame_width: u32,
    frame_height: u32,
) -> Vec<(usize, Point2D)> {
    let g = config.grid_size;
    let cell_w = f64::from(frame_width) / g as f64;
    let cell_h = f64::from(frame_height) / g as f64;
    let mut out = Vec::with_capacity(g * g * config.num_frames.div_ceil(config.reinit_stride));
    for frame in config.init_frames() {
        for j in 0..g {
            for i in 0..g {
                let x = (i as f64 + 0.5) * cell_w;
                let y = (j as f64 + 0.5) * cell_h;
                out.push((frame, Point2D::new(x, y)));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupConfig {
    delta: f64,
}

impl DedupConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(TatError::Config(format!("dedup radius must be finite and >= 0, got {delta}")));
        }
        Ok(DedupConfig { delta })
    }

    /// One grid cell width.
    pub fn for_grid(frame_width: u32, grid_size: usize) -> Self {
        DedupConfig {
            delta: f64::from(frame_width) / grid_size.max(1) as f64,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Whether `newer` duplicates `older`: `older` starts no later and the two
/// stay within `delta` on every frame they share.
pub fn is_redundant(older: &Trajectory, newer: &Trajectory, delta: f64) -> bool {
    if older.init_frame > newer.init_frame {
        return false;
    }
    let end = older.num_frames().min(newer.num_frames());
    (newer.init_frame..end).all(|t| match (older.point_at(t), newer.point_at(t)) {
        (Some(a), Some(b)) => a.distance(&b) <= delta,
        _ => false,
    })
}

/// Drops trajectories that repeat an earlier retained one. Candidates are
/// visited by (init frame, index); the retained set keeps input order.
pub fn deduplicate(set: &TrajectorySet, config: &DedupConfig) -> TrajectorySet {
    let mut order: Vec<usize> = (0..set.trajectories.len()).collect();
    order.sort_by_key(|&i| (set.trajectories[i].init_frame, i));

    let mut retained: Vec<usize> = Vec::new();
    for &cand in &order {
        let traj = &set.trajectories[cand];
        let dup = retained
            .iter()
            .any(|&r| is_redundant(&set.trajectories[r], traj, config.delta));
        if !dup {
            retained.push(cand);
        }
    }
    retained.sort_unstable();
    set.with_trajectories(
        retained
            .into_iter()
            .map(|i| set.trajectories[i].clone())
            .collect(),
    )
}
