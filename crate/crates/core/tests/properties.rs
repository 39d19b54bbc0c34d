use proptest::prelude::*;

use tat_core::episodic::{DatasetManifest, ManifestEntry, Split};
use tat_core::features::{decode_features, encode_features};
use tat_core::trajectory::{deduplicate, export_tracks, import_tracks, uniform_frames, DedupConfig};
use tat_core::*;

fn trajectory(frames: usize) -> impl Strategy<Value = Trajectory> {
    (0..frames).prop_flat_map(move |init| {
        prop::collection::vec((0.0..224.0f64, 0.0..224.0f64, any::<bool>()), frames - init).prop_map(move |pts| {
            let (points, visible) = pts.into_iter().map(|(x, y, v)| (Point2D::new(x, y), v)).unzip();
            Trajectory::new(init, points, visible).unwrap()
        })
    })
}

fn trajectory_set() -> impl Strategy<Value = TrajectorySet> {
    (1usize..9)
        .prop_flat_map(|frames| (Just(frames), prop::collection::vec(trajectory(frames), 0..12)))
        .prop_map(|(frames, trajs)| TrajectorySet::new("p", 224, 224, frames, trajs).unwrap())
}

proptest! {
    #[test]
    fn tracks_round_trip(set in trajectory_set()) {
        let text = export_tracks(&set);
        let back = import_tracks(&text).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(export_tracks(&back), text);
    }

    #[test]
    fn dedup_shrinks_and_settles(set in trajectory_set(), delta in 0.5..40.0f64) {
        let cfg = DedupConfig::new(delta).unwrap();
        let once = deduplicate(&set, &cfg);
        prop_assert!(once.len() <= set.len());
        prop_assert_eq!(deduplicate(&once, &cfg), once);
    }

    #[test]
    fn mask_is_a_monotone_prefix(set in trajectory_set()) {
        let mask = build_mask(&set);
        prop_assert!(mask.is_monotone());
        for (i, t) in set.trajectories.iter().enumerate() {
            for f in 0..set.num_frames {
                prop_assert_eq!(mask.is_valid(f, i), f >= t.init_frame);
            }
        }
    }

    #[test]
    fn uniform_frames_span_the_clip(total in 1usize..64, count in 1usize..64) {
        prop_assume!(count <= total);
        let frames = uniform_frames(total, count).unwrap();
        prop_assert_eq!(frames.len(), count);
        prop_assert_eq!(frames[0], 0);
        prop_assert!(frames.windows(2).all(|w| w[0] < w[1]));
        if count > 1 {
            prop_assert_eq!(frames[count - 1], total - 1);
        }
    }

    #[test]
    fn frame_selection_keeps_points(set in trajectory_set(), keep in prop::collection::vec(any::<bool>(), 8)) {
        let frames: Vec<usize> = (0..set.num_frames).filter(|&f| keep[f]).collect();
        prop_assume!(!frames.is_empty());
        let sub = set.select_frames(&frames).unwrap();
        prop_assert_eq!(sub.num_frames, frames.len());
        for t in &sub.trajectories {
            for (k, p) in t.points.iter().enumerate() {
                let original = frames[t.init_frame + k];
                prop_assert!(set.trajectories.iter().any(|s| s.point_at(original) == Some(*p)));
            }
        }
    }

    #[test]
    fn frame_distance_is_bounded(a in prop::collection::vec(-10.0..10.0f64, 1..16), scale in 0.01..100.0f64) {
        let b: Vec<f64> = a.iter().rev().copied().collect();
        let d = frame_distance(&a, &b);
        prop_assert!((0.0..=2.0).contains(&d));
        let scaled: Vec<f64> = b.iter().map(|v| v * scale).collect();
        prop_assert!((frame_distance(&a, &scaled) - d).abs() < 1e-12);
    }

    #[test]
    fn features_round_trip(t in 1usize..4, h in 1usize..5, w in 1usize..5, d in 1usize..6, seed in any::<u32>()) {
        let data = (0..t * h * w * d).map(|k| ((k as u32 ^ seed) as f32).sin()).collect();
        let grid = PatchTokenGrid::new(t, h, w, d, (96, 64), data).unwrap();
        let bytes = encode_features(&grid);
        prop_assert_eq!(decode_features(&bytes).unwrap(), grid);
    }

    #[test]
    fn manifest_round_trips(classes in prop::collection::vec((1usize..5, any::<bool>()), 1..8)) {
        let mut entries = Vec::new();
        for (c, &(videos, novel)) in classes.iter().enumerate() {
            for v in 0..videos {
                let split = if novel { Split::Novel } else { Split::Base };
                entries.push(ManifestEntry { video_id: format!("v{c}_{v}"), class_id: c, split });
            }
        }
        let names = (0..classes.len()).map(|c| (c, format!("class {c}"))).collect();
        let manifest = DatasetManifest::new(entries, names).unwrap();
        let (rows, names) = manifest.to_csv().unwrap();
        prop_assert_eq!(DatasetManifest::from_csv(&rows, Some(&names)).unwrap(), manifest);
    }
}
