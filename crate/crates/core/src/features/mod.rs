//! Per-frame patch-token grids and their alignment to trajectories.

mod io;
mod synthetic;

pub use io::{decode_features, encode_features, load_features, save_features};
pub use synthetic::{synthetic_features, FeatureSpec, ObjectFootprint, SceneContent};

use crate::error::{Result, TatError};
use crate::trajectory::TrajectorySet;

/// `T x Mh x Mw x D` patch tokens, row-major with `d` innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTokenGrid {
    pub num_frames: usize,
    pub patches_h: usize,
    pub patches_w: usize,
    pub dim: usize,
    pub frame_width: u32,
    pub frame_height: u32,
    pub data: Vec<f32>,
}

impl PatchTokenGrid {
    pub fn new(
        num_frames: usize,
        patches_h: usize,
        patches_w: usize,
        dim: usize,
        frame_size: (u32, u32),
        data: Vec<f32>,
    ) -> Result<Self> {
        let grid = PatchTokenGrid {
            num_frames,
            patches_h,
            patches_w,
            dim,
            frame_width: frame_size.0,
            frame_height: frame_size.1,
            data,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 || self.patches_h == 0 || self.patches_w == 0 || self.dim == 0 {
            return Err(TatError::Validation(format!(
                "feature grid dimensions must be positive, got T={} Mh={} Mw={} D={}",
                self.num_frames, self.patches_h, self.patches_w, self.dim
            )));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(TatError::Validation("feature grid frame size must be non-zero".into()));
        }
        let expected = self.num_frames * self.num_patches() * self.dim;
        if self.data.len() != expected {
            return Err(TatError::Validation(format!(
                "feature grid holds {} values, expected {expected}",
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(TatError::Validation("feature grid contains non-finite values".into()));
        }
        Ok(())
    }

    /// Keeps only the listed frames, see [`TrajectorySet::select_frames`].
    ///
    /// [`TrajectorySet::select_frames`]: crate::trajectory::TrajectorySet::select_frames
    pub fn select_frames(&self, frames: &[usize]) -> Result<PatchTokenGrid> {
        crate::trajectory::check_frame_selection(frames, self.num_frames)?;
        let per = self.num_patches() * self.dim;
        let mut data = Vec::with_capacity(frames.len() * per);
        for &f in frames {
            data.extend_from_slice(&self.data[f * per..(f + 1) * per]);
        }
        PatchTokenGrid::new(
            frames.len(),
            self.patches_h,
            self.patches_w,
            self.dim,
            (self.frame_width, self.frame_height),
            data,
        )
    }

    pub fn num_patches(&self) -> usize {
        self.patches_h * self.patches_w
    }

    pub fn patch_width(&self) -> f64 {
        f64::from(self.frame_width) / self.patches_w as f64
    }

    pub fn patch_height(&self) -> f64 {
        f64::from(self.frame_height) / self.patches_h as f64
    }

    pub fn token(&self, frame: usize, row: usize, col: usize) -> &[f32] {
        let start = ((frame * self.patches_h + row) * self.patches_w + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Patch `(row, col)` containing pixel `(x, y)`, clamped to the lattice.
    pub fn patch_index(&self, x: f64, y: f64) -> (usize, usize) {
        let cell = |v: f64, size: f64, n: usize| -> usize {
            let k = (v / size).floor();
            if k.is_nan() || k < 0.0 {
                0
            } else {
                (k as usize).min(n - 1)
            }
        };
        (
            cell(y, self.patch_height(), self.patches_h),
            cell(x, self.patch_width(), self.patches_w),
        )
    }
}

/// Trajectory-aligned tokens: `T x N x D` features, a `T x N` validity mask
/// and `T x N` normalized coordinates `(x / width, y / height)`.
///
/// Entries at invalid positions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TatTensor {
    pub num_frames: usize,
    pub num_points: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub valid: Vec<bool>,
    pub coords: Vec<[f32; 2]>,
}

impl TatTensor {
    pub fn zeros(num_frames: usize, num_points: usize, dim: usize) -> Self {
        TatTensor {
            num_frames,
            num_points,
            dim,
            data: vec![0.0; num_frames * num_points * dim],
            valid: vec![false; num_frames * num_points],
            coords: vec![[0.0; 2]; num_frames * num_points],
        }
    }

    pub fn token(&self, frame: usize, point: usize) -> &[f32] {
        let start = (frame * self.num_points + point) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn token_mut(&mut self, frame: usize, point: usize) -> &mut [f32] {
        let start = (frame * self.num_points + point) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn is_valid(&self, frame: usize, point: usize) -> bool {
        self.valid[frame * self.num_points + point]
    }

    /// Keeps only frames `0..frames`.
    pub fn truncate_frames(&self, frames: usize) -> TatTensor {
        let frames = frames.min(self.num_frames);
        let n = self.num_points;
        TatTensor {
            num_frames: frames,
            num_points: n,
            dim: self.dim,
            data: self.data[..frames * n * self.dim].to_vec(),
            valid: self.valid[..frames * n].to_vec(),
            coords: self.coords[..frames * n].to_vec(),
        }
    }
}

/// Nearest-patch lookup of every trajectory point.
pub fn grid_sample(set: &TrajectorySet, grid: &PatchTokenGrid) -> Result<TatTensor> {
    if set.frame_width != grid.frame_width || set.frame_height != grid.frame_height {
        return Err(TatError::Argument(format!(
            "trajectory frame {}x{} does not match feature frame {}x{}",
            set.frame_width, set.frame_height, grid.frame_width, grid.frame_height
        )));
    }
    if set.num_frames != grid.num_frames {
        return Err(TatError::Argument(format!(
            "trajectories span {} frames, features {}",
            set.num_frames, grid.num_frames
        )));
    }
    if set.is_empty() {
        return Err(TatError::Argument("grid sampling needs at least one trajectory".into()));
    }
    let n = set.len();
    let (w, h) = (f64::from(set.frame_width), f64::from(set.frame_height));
    let mut out = TatTensor::zeros(set.num_frames, n, grid.dim);
    for (i, traj) in set.trajectories.iter().enumerate() {
        for (k, p) in traj.points.iter().enumerate() {
            let t = traj.init_frame + k;
            let (row, col) = grid.patch_index(p.x, p.y);
            out.token_mut(t, i).copy_from_slice(grid.token(t, row, col));
            out.valid[t * n + i] = true;
            out.coords[t * n + i] = [(p.x / w) as f32, (p.y / h) as f32];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Point2D, Trajectory};

    fn ramp_grid(t: usize, mh: usize, mw: usize, d: usize, size: (u32, u32)) -> PatchTokenGrid {
        let data = (0..t * mh * mw * d).map(|v| v as f32).collect();
        PatchTokenGrid::new(t, mh, mw, d, size, data).unwrap()
    }

    #[test]
    fn patch_lookup_224() {
        let g = ramp_grid(1, 16, 16, 1, (224, 224));
        assert_eq!(g.patch_index(100.0, 50.0), (3, 7));
        assert_eq!(g.patch_index(0.0, 0.0), (0, 0));
        assert_eq!(g.patch_index(223.9, 223.9), (15, 15));
        assert_eq!(g.patch_index(-3.0, 400.0), (15, 0));
    }

    #[test]
    fn late_init_is_masked() {
        let g = ramp_grid(8, 4, 4, 2, (64, 64));
        let late = Trajectory::from_points(3, vec![Point2D::new(20.0, 20.0); 5]).unwrap();
        let early = Trajectory::from_points(0, vec![Point2D::new(1.0, 1.0); 8]).unwrap();
        let set = TrajectorySet::new("v", 64, 64, 8, vec![early, late]).unwrap();
        let tat = grid_sample(&set, &g).unwrap();
        for t in 0..8 {
            assert!(tat.is_valid(t, 0));
            assert_eq!(tat.is_valid(t, 1), t >= 3);
            if t < 3 {
                assert!(tat.token(t, 1).iter().all(|&v| v == 0.0));
                assert_eq!(tat.coords[t * 2 + 1], [0.0, 0.0]);
            } else {
                assert_eq!(tat.token(t, 1), g.token(t, 1, 1));
            }
        }
    }

    #[test]
    fn mismatched_frames_rejected() {
        let g = ramp_grid(2, 2, 2, 1, (32, 32));
        let set = TrajectorySet::new(
            "v",
            64,
            32,
            2,
            vec![Trajectory::from_points(0, vec![Point2D::new(1.0, 1.0); 2]).unwrap()],
        )
        .unwrap();
        assert!(matches!(grid_sample(&set, &g), Err(TatError::Argument(_))));
        let empty = TrajectorySet::new("v", 32, 32, 2, vec![]).unwrap();
        assert!(grid_sample(&empty, &g).is_err());
    }
}
