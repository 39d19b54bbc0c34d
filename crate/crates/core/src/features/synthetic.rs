//! Deterministic stand-in for a frozen self-supervised patch encoder.
//!
//! A patch token is the signature of whatever covers the patch center (an
//! object or the background), modulated by a smooth texture in that surface's
//! own coordinates, plus per-position Gaussian noise. Moving, rotating or
//! scaling an object therefore moves its texture with it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PatchTokenGrid;
use crate::error::{Result, TatError};
use crate::trajectory::Point2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub patches_h: usize,
    pub patches_w: usize,
    pub dim: usize,
    /// Texture amplitude relative to the unit-variance signature.
    pub texture: f64,
    /// Standard deviation of the per-entry noise.
    pub noise: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            patches_h: 16,
            patches_w: 16,
            dim: 64,
            texture: 0.5,
            noise: 0.1,
        }
    }
}

/// A disc-shaped object with a per-frame pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFootprint {
    /// Index into the shared appearance pool.
    pub appearance: u64,
    pub radius: f64,
    pub centers: Vec<Point2D>,
    pub angles: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ObjectFootprint {
    /// Object-frame coordinates of `p` at `frame`, or `None` if `p` is not
    /// covered.
    pub fn local(&self, frame: usize, p: Point2D) -> Option<(f64, f64)> {
        let c = self.centers[frame];
        let s = self.scales[frame];
        let (sin, cos) = (-self.angles[frame]).sin_cos();
        let (dx, dy) = ((p.x - c.x) / s, (p.y - c.y) / s);
        let (u, v) = (cos * dx - sin * dy, sin * dx + cos * dy);
        (u.hypot(v) <= self.radius).then_some((u, v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneContent {
    pub frame_width: u32,
    pub frame_height: u32,
    pub num_frames: usize,
    /// Index into the background pool.
    pub background: u64,
    /// Later objects are drawn on top.
    pub objects: Vec<ObjectFootprint>,
}

impl SceneContent {
    /// Topmost object covering `p` at `frame`.
    pub fn object_at(&self, frame: usize, p: Point2D) -> Option<usize> {
        (0..self.objects.len())
            .rev()
            .find(|&k| self.objects[k].local(frame, p).is_some())
    }
}

struct Surface {
    signature: Vec<f64>,
    freq: Vec<(f64, f64, f64)>,
}

impl Surface {
    fn new(pool: u64, id: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(pool.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id);
        let signature = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let freq = (0..dim)
            .map(|_| {
                (
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Surface { signature, freq }
    }

    fn write(&self, u: f64, v: f64, texture: f64, out: &mut [f64]) {
        for ((o, s), (fx, fy, ph)) in out.iter_mut().zip(&self.signature).zip(&self.freq) {
            *o = s + texture * (fx * u + fy * v + ph).cos();
        }
    }
}

const OBJECT_POOL: u64 = 1;
const BACKGROUND_POOL: u64 = 2;

pub fn synthetic_features(scene: &SceneContent, spec: &FeatureSpec, seed: u64) -> Result<PatchTokenGrid> {
    if spec.patches_h == 0 || spec.patches_w == 0 || spec.dim == 0 {
        return Err(TatError::Config("feature spec dimensions must be positive".into()));
    }
    for obj in &scene.objects {
        if obj.centers.len() != scene.num_frames
            || obj.angles.len() != scene.num_frames
            || obj.scales.len() != scene.num_frames
        {
            return Err(TatError::Config("object pose does not cover every frame".into()));
        }
    }
    let (mh, mw, d) = (spec.patches_h, spec.patches_w, spec.dim);
    let (w, h) = (f64::from(scene.frame_width), f64::from(scene.frame_height));
    let (pw, ph) = (w / mw as f64, h / mh as f64);
    let background = Surface::new(BACKGROUND_POOL, scene.background, d);
    let objects: Vec<Surface> = scene
        .objects
        .iter()
        .map(|o| Surface::new(OBJECT_POOL, o.appearance, d))
        .collect();
    // background texture wavelength is a fraction of the frame
    let bg_scale = 4.0 / w.max(h);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(scene.num_frames * mh * mw * d);
    let mut token = vec![0.0f64; d];
    for t in 0..scene.num_frames {
        for r in 0..mh {
            for c in 0..mw {
                let p = Point2D::new((c as f64 + 0.5) * pw, (r as f64 + 0.5) * ph);
                match scene.object_at(t, p) {
                    Some(k) => {
                        let obj = &scene.objects[k];
                        let (u, v) = obj.local(t, p).expect("covered");
                        objects[k].write(u / obj.radius, v / obj.radius, spec.texture, &mut token);
                    }
                    None => background.write(p.x * bg_scale, p.y * bg_scale, spec.texture, &mut token),
                }
                for v in &token {
                    let n: f64 = rng.sample(StandardNormal);
                    data.push((v + spec.noise * n) as f32);
                }
            }
        }
    }
    PatchTokenGrid::new(scene.num_frames, mh, mw, d, (scene.frame_width, scene.frame_height), data)
}
