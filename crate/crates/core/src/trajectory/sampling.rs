use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cluster_descriptors, hod_descriptor, trajectory_length, TrajectorySet};
use crate::error::{Result, TatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingKind {
    Random,
    /// Equal-width histogram of trajectory lengths, drawn round-robin.
    LengthStratified { num_bins: usize },
    /// Average-linkage clusters of HOD descriptors, drawn round-robin.
    HodClustered { num_clusters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingStrategy {
    pub kind: SamplingKind,
    limit: usize,
    pub seed: u64,
}

impl SamplingStrategy {
    pub fn new(kind: SamplingKind, limit: usize, seed: u64) -> Result<Self> {
        if limit == 0 {
            return Err(TatError::Config("sampling limit must be at least 1".into()));
        }
        match kind {
            SamplingKind::LengthStratified { num_bins: 0 } => {
                Err(TatError::Config("length stratification needs at least one bin".into()))
            }
            SamplingKind::HodClustered { num_clusters: 0 } => {
                Err(TatError::Config("HOD sampling needs at least one cluster".into()))
            }
            _ => Ok(SamplingStrategy { kind, limit, seed }),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

/// Draws one element per group in turn until `limit` are taken. Each group is
/// shuffled first.
fn round_robin(mut groups: Vec<Vec<usize>>, limit: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    for g in groups.iter_mut() {
        g.shuffle(rng);
    }
    let mut picked = Vec::with_capacity(limit);
    let mut depth = 0;
    while picked.len() < limit {
        let mut any = false;
        for g in &groups {
            if let Some(&i) = g.get(depth) {
                any = true;
                picked.push(i);
                if picked.len() == limit {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        depth += 1;
    }
    picked
}

/// Group index per trajectory from an equal-width length histogram.
pub(crate) fn length_bins(lengths: &[f64], num_bins: usize) -> Vec<usize> {
    let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / num_bins as f64;
    lengths
        .iter()
        .map(|&l| {
            if width > 0.0 {
                (((l - min) / width).floor() as usize).min(num_bins - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Reduces the set to at most `strategy.limit()` trajectories, keeping the
/// original relative order.
pub fn sample_trajectories(set: &TrajectorySet, strategy: &SamplingStrategy) -> Result<TrajectorySet> {
    let n = set.trajectories.len();
    if n <= strategy.limit {
        return Ok(set.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    let mut picked = match strategy.kind {
        SamplingKind::Random => index::sample(&mut rng, n, strategy.limit).into_vec(),
        SamplingKind::LengthStratified { num_bins } => {
            let lengths: Vec<f64> = set.trajectories.iter().map(trajectory_length).collect();
            let bins = length_bins(&lengths, num_bins);
            let mut groups = vec![Vec::new(); num_bins];
            for (i, b) in bins.into_iter().enumerate() {
                groups[b].push(i);
            }
            round_robin(groups, strategy.limit, &mut rng)
        }
        SamplingKind::HodClustered { num_clusters } => {
            let desc: Vec<_> = set.trajectories.iter().map(hod_descriptor).collect();
            let k = num_clusters.min(n);
            let labels = cluster_descriptors(&desc, k)?;
            let mut groups = vec![Vec::new(); k];
            for (i, l) in labels.into_iter().enumerate() {
                groups[l].push(i);
            }
            round_robin(groups, strategy.limit, &mut rng)
        }
    };
    picked.sort_unstable();
    Ok(set.with_trajectories(
        picked
            .into_iter()
            .map(|i| set.trajectories[i].clone())
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Point2D, Trajectory};

    fn set_with_lengths(lengths: &[f64]) -> TrajectorySet {
        let trajs = lengths
            .iter()
            .map(|&l| Trajectory::from_points(0, vec![Point2D::new(0.0, 0.0), Point2D::new(l, 0.0)]).unwrap())
            .collect();
        TrajectorySet::new("v", 512, 512, 2, trajs).unwrap()
    }

    #[test]
    fn under_limit_is_identity() {
        let set = set_with_lengths(&vec![1.0; 100]);
        let s = SamplingStrategy::new(SamplingKind::Random, 256, 0).unwrap();
        assert_eq!(sample_trajectories(&set, &s).unwrap(), set);
    }

    #[test]
    fn random_draws_distinct_members() {
        let lengths: Vec<f64> = (0..50).map(f64::from).collect();
        let set = set_with_lengths(&lengths);
        let s = SamplingStrategy::new(SamplingKind::Random, 20, 3).unwrap();
        let out = sample_trajectories(&set, &s).unwrap();
        assert_eq!(out.len(), 20);
        let xs: Vec<f64> = out.trajectories.iter().map(|t| t.points[1].x).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stratified_two_per_bin() {
        // four bins over [0, 40): 10 lengths in each
        let lengths: Vec<f64> = (0..40).map(|i| f64::from(i) + 0.5).collect();
        let set = set_with_lengths(&lengths);
        let s = SamplingStrategy::new(SamplingKind::LengthStratified { num_bins: 4 }, 8, 9).unwrap();
        let out = sample_trajectories(&set, &s).unwrap();
        let mut per_bin = [0; 4];
        for t in &out.trajectories {
            per_bin[(t.points[1].x / 10.0) as usize] += 1;
        }
        assert_eq!(per_bin, [2, 2, 2, 2]);
    }

    #[test]
    fn hod_clustered_returns_limit() {
        let lengths: Vec<f64> = (0..30).map(|i| f64::from(i % 3)).collect();
        let set = set_with_lengths(&lengths);
        let s = SamplingStrategy::new(SamplingKind::HodClustered { num_clusters: 3 }, 9, 1).unwrap();
        let out = sample_trajectories(&set, &s).unwrap();
        assert_eq!(out.len(), 9);
        for l in 0..3 {
            let c = out.trajectories.iter().filter(|t| t.points[1].x == f64::from(l)).count();
            assert_eq!(c, 3);
        }
    }

    #[test]
    fn zero_limit_rejected() {
        assert!(SamplingStrategy::new(SamplingKind::Random, 0, 0).is_err());
        assert!(SamplingStrategy::new(SamplingKind::LengthStratified { num_bins: 0 }, 4, 0).is_err());
    }
}
