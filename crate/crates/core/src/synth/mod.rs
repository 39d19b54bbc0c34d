//! Synthetic motion benchmark: textured discs whose class is defined only by
//! how they move, with exact point tracks and synthetic patch features.
//!
//! The appearance pool is shared by every class, so the label is carried by
//! motion alone. Motion parameters are relative to the clip: a translation
//! covers its displacement over the whole clip whatever the frame count.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodic::{DatasetManifest, ManifestEntry, Split, VideoSource};
use crate::error::{Result, TatError};
use crate::features::{synthetic_features, FeatureSpec, ObjectFootprint, SceneContent};
use crate::features::{PatchTokenGrid, TatTensor};
use crate::trajectory::{init_grid_queries, synthetic_track, GridInitConfig, Motion, Point2D, Trajectory, TrajectorySet};

/// Clip-level motion of every object in a video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassMotion {
    Still,
    /// Total displacement in pixels.
    Translate { dx: f64, dy: f64 },
    /// Total rotation in radians about the object center, positive is
    /// counter-clockwise in image coordinates.
    Rotate { angle: f64 },
    /// `cycles` full sine periods of the given amplitude along `(ax, ay)`.
    Oscillate { ax: f64, ay: f64, amplitude: f64, cycles: f64 },
    /// Total scale factor.
    Zoom { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    pub name: String,
    pub motion: ClassMotion,
    #[serde(default = "one")]
    pub objects: usize,
    /// Standard deviation of the tracking jitter in pixels.
    #[serde(default)]
    pub jitter: f64,
}

fn one() -> usize {
    1
}

impl MotionSpec {
    pub fn new(name: &str, motion: ClassMotion) -> Self {
        MotionSpec {
            name: name.into(),
            motion,
            objects: 1,
            jitter: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    pub frame_width: u32,
    pub frame_height: u32,
    pub num_frames: usize,
    pub features: FeatureSpec,
    pub grid_size: usize,
    pub reinit_stride: usize,
    pub base: Vec<MotionSpec>,
    pub novel: Vec<MotionSpec>,
    pub videos_per_class: usize,
    /// Per-video speed is drawn from `1 +- speed_jitter`.
    pub speed_jitter: f64,
    /// Per-video direction perturbation in radians.
    pub direction_jitter: f64,
    pub radius: (f64, f64),
    /// Object appearances are drawn from this many signatures shared by all
    /// classes, so appearance says little about the label.
    pub appearance_pool: u64,
    /// Backgrounds dominate a frame's mean token, so a varied pool drowns
    /// the motion signal at this scale.
    pub background_pool: u64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        let s = |name, motion| MotionSpec {
            objects: 3,
            ..MotionSpec::new(name, motion)
        };
        let oscillate = |ax, ay| ClassMotion::Oscillate { ax, ay, amplitude: 30.0, cycles: 1.0 };
        BenchmarkSpec {
            frame_width: 224,
            frame_height: 224,
            num_frames: 8,
            // noisy enough that locating objects from a fixed patch grid is
            // hard, while tracked points still carry the motion
            features: FeatureSpec {
                noise: 1.0,
                ..FeatureSpec::default()
            },
            grid_size: 16,
            reinit_stride: 4,
            base: vec![
                s("translate_right", ClassMotion::Translate { dx: 70.0, dy: 0.0 }),
                s("translate_up", ClassMotion::Translate { dx: 0.0, dy: -70.0 }),
                s("translate_left", ClassMotion::Translate { dx: -70.0, dy: 0.0 }),
                s("translate_down", ClassMotion::Translate { dx: 0.0, dy: 70.0 }),
                s("oscillate_horizontal", oscillate(1.0, 0.0)),
            ],
            novel: vec![
                s("translate_up_right", ClassMotion::Translate { dx: 50.0, dy: -50.0 }),
                s("translate_down_left", ClassMotion::Translate { dx: -50.0, dy: 50.0 }),
                s("translate_up_left", ClassMotion::Translate { dx: -50.0, dy: -50.0 }),
                s("oscillate_vertical", oscillate(0.0, 1.0)),
                s("still", ClassMotion::Still),
            ],
            videos_per_class: 12,
            speed_jitter: 0.25,
            direction_jitter: 0.15,
            radius: (40.0, 56.0),
            appearance_pool: 2,
            background_pool: 1,
            seed: 0,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.frame_width == 0 || self.frame_height == 0 {
            problems.push("frame size must be positive".to_string());
        }
        if self.num_frames < 2 {
            problems.push("num_frames must be at least 2".into());
        }
        if self.base.is_empty() || self.novel.is_empty() {
            problems.push("need at least one base and one novel class".into());
        }
        if self.videos_per_class == 0 {
            problems.push("videos_per_class must be positive".into());
        }
        if !(self.radius.0 > 0.0 && self.radius.0 <= self.radius.1) {
            problems.push("radius range must be positive and ordered".into());
        }
        if !(0.0..1.0).contains(&self.speed_jitter) {
            problems.push("speed_jitter must be in [0, 1)".into());
        }
        if self.appearance_pool == 0 || self.background_pool == 0 {
            problems.push("appearance pools must be non-empty".into());
        }
        for m in self.base.iter().chain(&self.novel) {
            if m.objects == 0 {
                problems.push(format!("class '{}' has no objects", m.name));
            }
            if !(m.jitter >= 0.0 && m.jitter.is_finite()) {
                problems.push(format!("class '{}' has invalid jitter", m.name));
            }
            if let ClassMotion::Zoom { factor } = m.motion {
                if factor.is_nan() || factor <= 0.0 {
                    problems.push(format!("class '{}' zoom factor must be positive", m.name));
                }
            }
        }
        if let Err(e) = GridInitConfig::new(self.grid_size, self.reinit_stride, self.num_frames.max(1)) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TatError::Config(problems.join("; ")))
        }
    }

    pub fn num_classes(&self) -> usize {
        self.base.len() + self.novel.len()
    }

    /// Class ids: base classes first, then novel.
    pub fn class(&self, class_id: usize) -> (&MotionSpec, Split) {
        if class_id < self.base.len() {
            (&self.base[class_id], Split::Base)
        } else {
            (&self.novel[class_id - self.base.len()], Split::Novel)
        }
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut entries = Vec::new();
        let mut names = BTreeMap::new();
        for c in 0..self.num_classes() {
            let (m, split) = self.class(c);
            names.insert(c, m.name.clone());
            for v in 0..self.videos_per_class {
                entries.push(ManifestEntry {
                    video_id: video_id(c, v),
                    class_id: c,
                    split,
                });
            }
        }
        DatasetManifest { entries, class_names: names }
    }
}

pub fn video_id(class_id: usize, index: usize) -> String {
    format!("c{class_id:02}_v{index:03}")
}

pub fn parse_video_id(id: &str) -> Option<(usize, usize)> {
    let rest = id.strip_prefix('c')?;
    let (c, v) = rest.split_once("_v")?;
    Some((c.parse().ok()?, v.parse().ok()?))
}

/// A generated video: scene layout, exact tracks from grid queries and patch
/// features.
#[derive(Debug, Clone)]
pub struct Scene {
    pub content: SceneContent,
    /// Per-frame motion of each object, in object order.
    pub motions: Vec<Motion>,
    pub tracks: TrajectorySet,
    pub features: PatchTokenGrid,
}

impl ClassMotion {
    /// Per-frame motion for a clip of `frames` frames, scaled by `speed`,
    /// with its direction turned by `heading` and rotation or zoom about
    /// `center`.
    pub fn per_frame(&self, frames: usize, speed: f64, heading: f64, center: Point2D) -> Motion {
        let span = frames.saturating_sub(1).max(1) as f64;
        let (hs, hc) = heading.sin_cos();
        let turn = |x: f64, y: f64| (hc * x - hs * y, hs * x + hc * y);
        match *self {
            ClassMotion::Still => Motion::Still,
            ClassMotion::Translate { dx, dy } => {
                let (dx, dy) = turn(dx * speed / span, dy * speed / span);
                Motion::Translate { dx, dy }
            }
            ClassMotion::Rotate { angle } => Motion::Rotate {
                omega: angle * speed / span,
                cx: center.x,
                cy: center.y,
            },
            ClassMotion::Oscillate { ax, ay, amplitude, cycles } => {
                let (ax, ay) = turn(ax, ay);
                Motion::Oscillate {
                    ax,
                    ay,
                    amplitude: amplitude * speed,
                    period: span / cycles,
                }
            }
            ClassMotion::Zoom { factor } => Motion::Zoom {
                rate: factor.powf(speed / span) - 1.0,
                cx: center.x,
                cy: center.y,
            },
        }
    }
}

fn video_rng(seed: u64, class_id: usize, index: usize) -> ChaCha8Rng {
    let key = ((class_id as u64) << 32) ^ index as u64;
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ key.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Scene layout of one video and the per-frame motion of each object.
pub fn scene_content(spec: &BenchmarkSpec, class_id: usize, rng: &mut ChaCha8Rng) -> (SceneContent, Vec<Motion>) {
    let (m, _) = spec.class(class_id);
    let (w, h) = (f64::from(spec.frame_width), f64::from(spec.frame_height));
    let frames = spec.num_frames;
    let origin = Point2D::new(0.0, 0.0);
    let background = rng.random_range(0..spec.background_pool);
    let mut objects = Vec::with_capacity(m.objects);
    let mut motions = Vec::with_capacity(m.objects);
    for _ in 0..m.objects {
        let appearance = rng.random_range(0..spec.appearance_pool);
        let radius = rng.random_range(spec.radius.0..=spec.radius.1);
        let speed = rng.random_range(1.0 - spec.speed_jitter..=1.0 + spec.speed_jitter);
        let heading = rng.random_range(-spec.direction_jitter..=spec.direction_jitter);
        let angle0 = rng.random_range(0.0..TAU);
        // center shifts do not depend on where the object starts
        let shifts: Vec<Point2D> = {
            let probe = m.motion.per_frame(frames, speed, heading, origin);
            (0..frames).map(|t| probe.position(origin, 0, t)).collect()
        };
        let scales: Vec<f64> = match m.motion.per_frame(frames, speed, heading, origin) {
            Motion::Zoom { rate, .. } => (0..frames).map(|t| (1.0 + rate).powi(t as i32)).collect(),
            _ => vec![1.0; frames],
        };
        let margin = radius * scales.iter().copied().fold(1.0, f64::max) * 0.8;
        let mut place = |extent: f64, offsets: &mut dyn Iterator<Item = f64>| {
            let (lo_off, hi_off) = offsets.fold((0.0f64, 0.0f64), |(a, b), o| (a.min(o), b.max(o)));
            let (lo, hi) = (margin - lo_off, extent - margin - hi_off);
            if lo < hi {
                rng.random_range(lo..hi)
            } else {
                (lo + hi) / 2.0
            }
        };
        let x0 = place(w, &mut shifts.iter().map(|p| p.x));
        let y0 = place(h, &mut shifts.iter().map(|p| p.y));
        let start = Point2D::new(x0, y0);
        let motion = m.motion.per_frame(frames, speed, heading, start);
        let angles = match motion {
            Motion::Rotate { omega, .. } => (0..frames).map(|t| angle0 + omega * t as f64).collect(),
            _ => vec![angle0; frames],
        };
        objects.push(ObjectFootprint {
            appearance,
            radius,
            centers: (0..frames).map(|t| motion.position(start, 0, t)).collect(),
            angles,
            scales,
        });
        motions.push(motion);
    }
    let content = SceneContent {
        frame_width: spec.frame_width,
        frame_height: spec.frame_height,
        num_frames: frames,
        background,
        objects,
    };
    (content, motions)
}

/// Oracle tracks of grid queries: a query on an object follows that
/// object's motion, one on the background stays put. Jitter is added after
/// the query frame. Points are not visible while clamped to the border or
/// covered by a higher object.
pub fn scene_tracks(
    content: &SceneContent,
    motions: &[Motion],
    grid: &GridInitConfig,
    jitter: f64,
    video_id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectorySet> {
    let (w, h) = (content.frame_width, content.frame_height);
    let size = (w, h);
    let queries = init_grid_queries(grid, w, h);
    let owners: Vec<Option<usize>> = queries.iter().map(|&(q, p)| content.object_at(q, p)).collect();
    let mut slots: Vec<Option<Trajectory>> = vec![None; queries.len()];
    for group in std::iter::once(None).chain((0..motions.len()).map(Some)) {
        let members: Vec<usize> = (0..queries.len()).filter(|&k| owners[k] == group).collect();
        if members.is_empty() {
            continue;
        }
        let motion = group.map_or(Motion::Still, |k| motions[k]);
        let picked: Vec<_> = members.iter().map(|&k| queries[k]).collect();
        let tracked = synthetic_track(&motion, &picked, content.num_frames, size, video_id)?;
        for (k, traj) in members.into_iter().zip(tracked.trajectories) {
            slots[k] = Some(traj);
        }
    }
    let mut trajectories = Vec::with_capacity(queries.len());
    for (k, traj) in slots.into_iter().enumerate() {
        let mut traj = traj.expect("every query is tracked");
        let q = traj.init_frame;
        for (j, p) in traj.points.iter_mut().enumerate() {
            let t = q + j;
            let top = content.object_at(t, *p);
            let occluded = match owners[k] {
                Some(o) => top.is_some_and(|i| i > o),
                None => top.is_some(),
            };
            if t != q && jitter > 0.0 {
                p.x += jitter * rng.sample::<f64, _>(StandardNormal);
                p.y += jitter * rng.sample::<f64, _>(StandardNormal);
            }
            let clamped = p.clamp_to(w, h);
            traj.visible[j] = traj.visible[j] && !clamped && !occluded;
        }
        trajectories.push(traj);
    }
    TrajectorySet::new(video_id, w, h, content.num_frames, trajectories)
}

/// Generates one video deterministically from the spec seed, class and index.
pub fn generate_scene(spec: &BenchmarkSpec, class_id: usize, index: usize) -> Result<Scene> {
    if class_id >= spec.num_classes() {
        return Err(TatError::Argument(format!("class {class_id} outside 0..{}", spec.num_classes())));
    }
    let mut rng = video_rng(spec.seed, class_id, index);
    let (content, motions) = scene_content(spec, class_id, &mut rng);
    let grid = GridInitConfig::new(spec.grid_size, spec.reinit_stride, spec.num_frames)?;
    let id = video_id(class_id, index);
    let tracks = scene_tracks(&content, &motions, &grid, spec.class(class_id).0.jitter, &id, &mut rng)?;
    let features = synthetic_features(&content, &spec.features, rng.random())?;
    Ok(Scene {
        content,
        motions,
        tracks,
        features,
    })
}

/// Writes `manifest.csv`, `classes.csv`, `spec.json`, `tracks/<id>.json`
/// and `features/<id>.tatf` under `out_dir`. Output is byte-identical for a
/// given spec.
pub fn generate_benchmark(spec: &BenchmarkSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let manifest = spec.manifest();
    manifest
        .entries
        .par_iter()
        .enumerate()
        .try_for_each(|(_, e)| -> Result<()> {
            let (c, v) = parse_video_id(&e.video_id).expect("generated id");
            let scene = generate_scene(spec, c, v)?;
            crate::trajectory::write_tracks(&out_dir.join("tracks").join(format!("{}.json", e.video_id)), &scene.tracks)?;
            crate::features::save_features(
                &out_dir.join("features").join(format!("{}.tatf", e.video_id)),
                &scene.features,
            )
        })?;
    let spec_json = serde_json::to_string_pretty(spec).map_err(|e| TatError::Data(e.to_string()))?;
    crate::io_util::write_atomic(&out_dir.join("spec.json"), spec_json.as_bytes())?;
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Generates videos on demand instead of reading them from disk.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub spec: BenchmarkSpec,
}

impl SyntheticSource {
    pub fn new(spec: BenchmarkSpec) -> Result<Self> {
        spec.validate()?;
        Ok(SyntheticSource { spec })
    }
}

impl VideoSource for SyntheticSource {
    fn load(&self, video_id: &str) -> Result<(TrajectorySet, PatchTokenGrid)> {
        let (c, v) = parse_video_id(video_id)
            .filter(|&(c, v)| c < self.spec.num_classes() && v < self.spec.videos_per_class)
            .ok_or_else(|| TatError::Data(format!("unknown synthetic video '{video_id}'")))?;
        let scene = generate_scene(&self.spec, c, v)?;
        Ok((scene.tracks, scene.features))
    }
}

/// Baseline tokens without point tracking: the first `limit` patches in
/// row-major order, read at every frame at their fixed centers.
pub fn no_points_tokens(grid: &PatchTokenGrid, limit: usize) -> Result<TatTensor> {
    let m = grid.num_patches();
    if limit == 0 {
        return Err(TatError::Argument("token limit must be positive".into()));
    }
    let n = limit.min(m);
    let mut out = TatTensor::zeros(grid.num_frames, n, grid.dim);
    for t in 0..grid.num_frames {
        for i in 0..n {
            let (r, c) = (i / grid.patches_w, i % grid.patches_w);
            out.token_mut(t, i).copy_from_slice(grid.token(t, r, c));
            out.valid[t * n + i] = true;
            out.coords[t * n + i] = [
                ((c as f64 + 0.5) / grid.patches_w as f64) as f32,
                ((r as f64 + 0.5) / grid.patches_h as f64) as f32,
            ];
        }
    }
    Ok(out)
}
