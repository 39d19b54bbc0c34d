use std::path::{Path, PathBuf};

use crate::error::{Result, TatError};
use crate::features::{load_features, PatchTokenGrid};
use crate::trajectory::{read_tracks, TrajectorySet};

/// Where the tracks and patch features of a video come from.
pub trait VideoSource: Sync {
    fn load(&self, video_id: &str) -> Result<(TrajectorySet, PatchTokenGrid)>;
}

/// A dataset directory with `tracks/<id>.json` and `features/<id>.tatf`.
#[derive(Debug, Clone)]
pub struct FileSource {
    root: PathBuf,
}

impl FileSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FileSource { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl VideoSource for FileSource {
    fn load(&self, video_id: &str) -> Result<(TrajectorySet, PatchTokenGrid)> {
        let tracks = self.root.join("tracks").join(format!("{video_id}.json"));
        let features = self.root.join("features").join(format!("{video_id}.tatf"));
        for p in [&tracks, &features] {
            if !p.is_file() {
                return Err(TatError::Data(format!("video {video_id} is missing {}", p.display())));
            }
        }
        Ok((read_tracks(&tracks)?, load_features(&features)?))
    }
}
