//! Closed-form motion fields used as an oracle tracker.

use std::f64::consts::TAU;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Point2D, Trajectory, TrajectorySet};
use crate::error::{Result, TatError};

/// Per-frame motion of a point. Parameters are in pixels and frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Still,
    Translate { dx: f64, dy: f64 },
    /// `omega` radians per frame, counter-clockwise in image coordinates
    /// (x right, y down) when positive.
    Rotate { omega: f64, cx: f64, cy: f64 },
    /// Sinusoidal displacement along `(ax, ay)` with `period` frames.
    Oscillate { ax: f64, ay: f64, amplitude: f64, period: f64 },
    /// Scales distance from the center by `1 + rate` every frame.
    Zoom { rate: f64, cx: f64, cy: f64 },
}

impl Motion {
    /// Position at frame `t` of a point that was at `start` on frame `q`.
    pub fn position(&self, start: Point2D, q: usize, t: usize) -> Point2D {
        let steps = t as f64 - q as f64;
        match *self {
            Motion::Still => start,
            Motion::Translate { dx, dy } => Point2D::new(start.x + steps * dx, start.y + steps * dy),
            Motion::Rotate { omega, cx, cy } => {
                let (s, c) = (omega * steps).sin_cos();
                let (rx, ry) = (start.x - cx, start.y - cy);
                Point2D::new(cx + c * rx - s * ry, cy + s * rx + c * ry)
            }
            Motion::Oscillate {
                ax,
                ay,
                amplitude,
                period,
            } => {
                let norm = ax.hypot(ay);
                let (ux, uy) = if norm > 0.0 { (ax / norm, ay / norm) } else { (0.0, 0.0) };
                let phase = |k: f64| (TAU * k / period).sin();
                let offset = amplitude * (phase(t as f64) - phase(q as f64));
                Point2D::new(start.x + offset * ux, start.y + offset * uy)
            }
            Motion::Zoom { rate, cx, cy } => {
                let s = (1.0 + rate).powf(steps);
                Point2D::new(cx + (start.x - cx) * s, cy + (start.y - cy) * s)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match *self {
            Motion::Still => true,
            Motion::Translate { dx, dy } => finite(&[dx, dy]),
            Motion::Rotate { omega, cx, cy } => finite(&[omega, cx, cy]),
            Motion::Oscillate {
                ax,
                ay,
                amplitude,
                period,
            } => finite(&[ax, ay, amplitude, period]) && period != 0.0,
            Motion::Zoom { rate, cx, cy } => finite(&[rate, cx, cy]) && rate > -1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(TatError::Config(format!("invalid motion parameters: {self:?}")))
        }
    }
}

/// Parses `kind` or `kind:p1,p2,...`, e.g. `translate:2,0` or
/// `rotate:0.1,112,112`.
impl FromStr for Motion {
    type Err = TatError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params: Vec<f64> = if rest.trim().is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| TatError::Config(format!("bad motion parameter '{p}' in '{s}'")))
                })
                .collect::<Result<_>>()?
        };
        let need = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(TatError::Config(format!(
                    "motion '{kind}' takes {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        let motion = match kind.trim() {
            "still" => {
                need(0)?;
                Motion::Still
            }
            "translate" => {
                need(2)?;
                Motion::Translate { dx: params[0], dy: params[1] }
            }
            "rotate" => {
                need(3)?;
                Motion::Rotate { omega: params[0], cx: params[1], cy: params[2] }
            }
            "oscillate" => {
                need(4)?;
                Motion::Oscillate {
                    ax: params[0],
                    ay: params[1],
                    amplitude: params[2],
                    period: params[3],
                }
            }
            "zoom" => {
                need(3)?;
                Motion::Zoom { rate: params[0], cx: params[1], cy: params[2] }
            }
            other => return Err(TatError::Config(format!("unknown motion kind '{other}'"))),
        };
        motion.validate()?;
        Ok(motion)
    }
}

/// Advances every query under `motion` to the last frame. Points leaving the
/// frame are clamped to the border and marked not visible.
pub fn synthetic_track(
    motion: &Motion,
    queries: &[(usize, Point2D)],
    num_frames: usize,
    frame_size: (u32, u32),
    video_id: &str,
) -> Result<TrajectorySet> {
    motion.validate()?;
    let (w, h) = frame_size;
    let mut trajectories = Vec::with_capacity(queries.len());
    for (k, &(q, start)) in queries.iter().enumerate() {
        if q >= num_frames {
            return Err(TatError::Argument(format!(
                "query {k} starts at frame {q} but the clip has {num_frames} frames"
            )));
        }
        let mut points = Vec::with_capacity(num_frames - q);
        let mut visible = Vec::with_capacity(num_frames - q);
        for t in q..num_frames {
            let mut p = motion.position(start, q, t);
            let clamped = p.clamp_to(w, h);
            points.push(p);
            visible.push(!clamped);
        }
        trajectories.push(Trajectory::new(q, points, visible)?);
    }
    TrajectorySet::new(video_id, w, h, num_frames, trajectories)
}
