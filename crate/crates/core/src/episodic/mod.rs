//! Episodic few-shot training and evaluation.

mod eval;
mod loss;
mod manifest;
mod pipeline;
mod source;
mod train;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};

pub use eval::{embed_videos, evaluate, evaluate_with, EvalConfig, EvalResult};
pub use loss::{cls_loss, metric_loss, LossConfig};
pub use manifest::{class_table_path, DatasetManifest, ManifestEntry, Split};
pub use pipeline::{build_tokens, video_seed, PipelineConfig};
pub use source::{FileSource, VideoSource};
pub use train::{train, LossRecord, TrainConfig};

/// One N-way K-shot task. Labels are positions in `classes`; videos are
/// indices into the manifest entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub classes: Vec<usize>,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }

    /// Supports followed by queries.
    pub fn videos(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.support.iter().chain(&self.query).copied()
    }
}

/// Draws `n_way` classes of `split`, `k_shot` supports per class and up to
/// `n_query` queries in total, spread over the classes as evenly as the data
/// allows. Supports and queries never overlap.
pub fn sample_episode<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    split: Split,
    n_way: usize,
    k_shot: usize,
    n_query: usize,
    rng: &mut R,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 {
        return Err(TatError::Argument(format!(
            "n_way and k_shot must be positive, got {n_way} and {k_shot}"
        )));
    }
    let eligible: Vec<(usize, Vec<usize>)> = manifest
        .videos_by_class(split)
        .into_iter()
        .filter(|(_, v)| v.len() > k_shot)
        .collect();
    if eligible.len() < n_way {
        return Err(TatError::Sampling(format!(
            "{split} split has {} classes with at least {} videos, an episode needs {n_way}",
            eligible.len(),
            k_shot + 1
        )));
    }
    let chosen = index::sample(rng, eligible.len(), n_way).into_vec();
    let mut episode = Episode {
        classes: Vec::with_capacity(n_way),
        support: Vec::with_capacity(n_way * k_shot),
        query: Vec::with_capacity(n_query),
    };
    let mut pools = Vec::with_capacity(n_way);
    for (label, &c) in chosen.iter().enumerate() {
        let (class_id, videos) = &eligible[c];
        let mut videos = videos.clone();
        videos.shuffle(rng);
        episode.classes.push(*class_id);
        episode.support.extend(videos[..k_shot].iter().map(|&v| (v, label)));
        pools.push(videos[k_shot..].to_vec());
    }
    // round-robin over classes so queries are balanced
    let mut depth = 0;
    while episode.query.len() < n_query {
        let before = episode.query.len();
        for (label, pool) in pools.iter().enumerate() {
            if episode.query.len() == n_query {
                break;
            }
            if let Some(&v) = pool.get(depth) {
                episode.query.push((v, label));
            }
        }
        if episode.query.len() == before {
            break;
        }
        depth += 1;
    }
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeMap, BTreeSet};

    fn manifest(classes: usize, per_class: usize, split: Split) -> DatasetManifest {
        let entries = (0..classes)
            .flat_map(|c| {
                (0..per_class).map(move |v| ManifestEntry {
                    video_id: format!("{c}-{v}"),
                    class_id: c,
                    split,
                })
            })
            .collect();
        DatasetManifest::new(entries, BTreeMap::new()).unwrap()
    }

    #[test]
    fn five_way_one_shot() {
        let m = manifest(10, 20, Split::Novel);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ep = sample_episode(&m, Split::Novel, 5, 1, 5, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.query.len(), 5);
        let labels: BTreeSet<_> = ep.query.iter().map(|q| q.1).collect();
        assert_eq!(labels.len(), 5);
        for (v, label) in ep.videos() {
            assert_eq!(m.entries[v].class_id, ep.classes[label]);
        }
        let s: BTreeSet<_> = ep.support.iter().map(|s| s.0).collect();
        assert!(ep.query.iter().all(|q| !s.contains(&q.0)));
    }

    #[test]
    fn deficit_is_named() {
        let m = manifest(3, 5, Split::Novel);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match sample_episode(&m, Split::Novel, 5, 1, 5, &mut rng).unwrap_err() {
            TatError::Sampling(msg) => assert!(msg.contains("3 classes") && msg.contains("needs 5"), "{msg}"),
            e => panic!("{e}"),
        }
        // wrong split has no classes at all
        assert!(sample_episode(&m, Split::Base, 1, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn queries_limited_by_data() {
        let m = manifest(2, 3, Split::Base);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ep = sample_episode(&m, Split::Base, 2, 2, 10, &mut rng).unwrap();
        assert_eq!(ep.query.len(), 2);
    }
}
