//! Bottom-up average-linkage clustering of HOD descriptors.

use super::HodDescriptor;
use crate::error::{Result, TatError};

/// Merges clusters by smallest average pairwise Euclidean distance until
/// `num_clusters` remain. Ties go to the lowest `(i, j)` pair. Labels are
/// numbered by the first descriptor in each cluster.
pub fn cluster_descriptors(descriptors: &[HodDescriptor], num_clusters: usize) -> Result<Vec<usize>> {
    let n = descriptors.len();
    if num_clusters == 0 {
        return Err(TatError::Argument("cluster count must be at least 1".into()));
    }
    if n == 0 {
        return Err(TatError::Argument("no descriptors to cluster".into()));
    }
    if num_clusters > n {
        return Err(TatError::Argument(format!(
            "cannot form {num_clusters} clusters from {n} descriptors"
        )));
    }

    // condensed upper-triangular storage would halve memory; n stays in the
    // hundreds here so a full matrix is fine
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = descriptors[i].distance(&descriptors[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut remaining = n;

    while remaining > num_clusters {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let row = &dist[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                if active[j] && row[j] < best.0 {
                    best = (row[j], i, j);
                }
            }
        }
        let (_, a, b) = best;
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if active[k] && k != a && k != b {
                let d = (sa * dist[a * n + k] + sb * dist[b * n + k]) / (sa + sb);
                dist[a * n + k] = d;
                dist[k * n + a] = d;
            }
        }
        size[a] += size[b];
        active[b] = false;
        parent[b] = a;
        remaining -= 1;
    }

    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let r = root(i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels.push(label_of_root[r]);
    }
    Ok(labels)
}
