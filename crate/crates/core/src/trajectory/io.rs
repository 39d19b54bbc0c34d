//! JSON track files.
//!
//! ```text
//! {"video_id": "...", "width": 224, "height": 224, "num_frames": 8,
//!  "tracks": [{"q": 0, "x": [...], "y": [...], "vis": [...]}, ...]}
//! ```
//! Frame indices are 0-based; track arrays hold `num_frames - q` entries.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Point2D, Trajectory, TrajectorySet};
use crate::error::{Result, TatError};

#[derive(Serialize, Deserialize)]
struct TrackRecord {
    q: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    vis: Vec<bool>,
}

#[derive(Serialize)]
struct TrackFileOut<'a> {
    video_id: &'a str,
    width: u32,
    height: u32,
    num_frames: usize,
    tracks: Vec<TrackRecord>,
}

pub fn export_tracks(set: &TrajectorySet) -> String {
    let tracks = set
        .trajectories
        .iter()
        .map(|t| TrackRecord {
            q: t.init_frame,
            x: t.points.iter().map(|p| p.x).collect(),
            y: t.points.iter().map(|p| p.y).collect(),
            vis: t.visible.clone(),
        })
        .collect();
    let file = TrackFileOut {
        video_id: &set.video_id,
        width: set.frame_width,
        height: set.frame_height,
        num_frames: set.num_frames,
        tracks,
    };
    serde_json::to_string(&file).expect("track records always serialize")
}

fn field<T: serde::de::DeserializeOwned>(obj: &Value, key: &str, record: &str) -> Result<T> {
    let v = obj
        .get(key)
        .ok_or_else(|| TatError::parse(record, format!("missing field '{key}'")))?;
    serde_json::from_value(v.clone()).map_err(|e| TatError::parse(record, format!("field '{key}': {e}")))
}

pub fn import_tracks(text: &str) -> Result<TrajectorySet> {
    let root: Value = serde_json::from_str(text).map_err(|e| TatError::parse("header", e.to_string()))?;
    if !root.is_object() {
        return Err(TatError::parse("header", "expected a JSON object"));
    }
    let video_id: String = field(&root, "video_id", "header")?;
    let width: u32 = field(&root, "width", "header")?;
    let height: u32 = field(&root, "height", "header")?;
    let num_frames: usize = field(&root, "num_frames", "header")?;
    let tracks = root
        .get("tracks")
        .and_then(Value::as_array)
        .ok_or_else(|| TatError::parse("header", "missing array field 'tracks'"))?;

    let mut trajectories = Vec::with_capacity(tracks.len());
    for (i, rec) in tracks.iter().enumerate() {
        let name = format!("tracks[{i}]");
        let rec: TrackRecord =
            serde_json::from_value(rec.clone()).map_err(|e| TatError::parse(&name, e.to_string()))?;
        if rec.x.len() != rec.y.len() || rec.x.len() != rec.vis.len() {
            return Err(TatError::Validation(format!(
                "{name}: x/y/vis lengths differ ({}, {}, {})",
                rec.x.len(),
                rec.y.len(),
                rec.vis.len()
            )));
        }
        let points = rec.x.iter().zip(&rec.y).map(|(&x, &y)| Point2D::new(x, y)).collect();
        let traj = Trajectory::new(rec.q, points, rec.vis)
            .map_err(|e| TatError::Validation(format!("{name}: {e}")))?;
        trajectories.push(traj);
    }
    TrajectorySet::new(video_id, width, height, num_frames, trajectories)
}

pub fn write_tracks(path: &Path, set: &TrajectorySet) -> Result<()> {
    crate::io_util::write_atomic(path, export_tracks(set).as_bytes())
}

pub fn read_tracks(path: &Path) -> Result<TrajectorySet> {
    let text = fs::read_to_string(path).map_err(|e| TatError::io(path, e))?;
    import_tracks(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectorySet {
        let a = Trajectory::new(
            0,
            vec![Point2D::new(0.1, 0.2), Point2D::new(1.0 / 3.0, 223.99999999999997), Point2D::new(5.0, 6.0)],
            vec![true, false, true],
        )
        .unwrap();
        let b = Trajectory::from_points(2, vec![Point2D::new(std::f64::consts::PI, 1e-300)]).unwrap();
        TrajectorySet::new("clip_7", 224, 224, 3, vec![a, b]).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = sample();
        assert_eq!(import_tracks(&export_tracks(&s)).unwrap(), s);
    }

    #[test]
    fn empty_list_is_valid() {
        let s = TrajectorySet::new("e", 4, 4, 2, vec![]).unwrap();
        let back = import_tracks(&export_tracks(&s)).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn wrong_length_is_validation_error() {
        let text = r#"{"video_id":"v","width":8,"height":8,"num_frames":4,
            "tracks":[{"q":1,"x":[1,2],"y":[1,2],"vis":[true,true]}]}"#;
        let err = import_tracks(text).unwrap_err();
        assert!(matches!(err, TatError::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_record_is_named() {
        let text = r#"{"video_id":"v","width":8,"height":8,"num_frames":1,
            "tracks":[{"q":0,"x":[1],"y":[1],"vis":[true]},{"q":0,"x":["a"],"y":[1],"vis":[true]}]}"#;
        match import_tracks(text).unwrap_err() {
            TatError::Parse { record, .. } => assert_eq!(record, "tracks[1]"),
            e => panic!("unexpected {e}"),
        }
        match import_tracks(r#"{"video_id":"v","width":-8}"#).unwrap_err() {
            TatError::Parse { record, message } => {
                assert_eq!(record, "header");
                assert!(message.contains("width"));
            }
            e => panic!("unexpected {e}"),
        }
    }
}
