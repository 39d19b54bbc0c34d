//! Bidirectional mean Hausdorff matching between frame-embedding sequences.
//!
//! Frame distance is `1 - cos(a, b)`. The metric sums the two directional
//! means of nearest-frame distances, so it ignores frame order.

use crate::error::{Result, TatError};
use crate::real::Real;

/// Below this norm a vector is treated as degenerate.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<F> {
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<F>,
}

impl<F: Real> FrameSequence<F> {
    pub fn new(frames: usize, dim: usize, data: Vec<F>) -> Result<Self> {
        if frames == 0 || dim == 0 || data.len() != frames * dim {
            return Err(TatError::Argument(format!(
                "frame sequence of {frames}x{dim} cannot hold {} values",
                data.len()
            )));
        }
        Ok(FrameSequence { frames, dim, data })
    }

    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Cosine distance plus a flag set when either vector is degenerate, in which
/// case the distance is 1.
pub fn frame_distance_checked<F: Real>(a: &[F], b: &[F]) -> (F, bool) {
    let sa: F = a.iter().map(|&v| v * v).sum();
    let sb: F = b.iter().map(|&v| v * v).sum();
    if sa.sqrt().f64() < MIN_NORM || sb.sqrt().f64() < MIN_NORM {
        return (F::one(), true);
    }
    let dot: F = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    // sqrt(sa * sa) == sa exactly, so a vector is at distance 0 from itself
    let cos = (dot / (sa * sb).sqrt()).max(-F::one()).min(F::one());
    (F::one() - cos, false)
}

pub fn frame_distance<F: Real>(a: &[F], b: &[F]) -> F {
    frame_distance_checked(a, b).0
}

/// Adds `scale * d(frame_distance)/da` and `.../db`.
fn frame_distance_grad<F: Real>(a: &[F], b: &[F], scale: F, ga: &mut [F], gb: &mut [F]) {
    let na = a.iter().map(|&v| v * v).sum::<F>().sqrt();
    let nb = b.iter().map(|&v| v * v).sum::<F>().sqrt();
    if na.f64() < MIN_NORM || nb.f64() < MIN_NORM {
        return;
    }
    let dot: F = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let inv = F::one() / (na * nb);
    let cos = dot * inv;
    let (ca, cb) = (cos / (na * na), cos / (nb * nb));
    for j in 0..a.len() {
        ga[j] -= scale * (b[j] * inv - a[j] * ca);
        gb[j] -= scale * (a[j] * inv - b[j] * cb);
    }
}

fn check_dims<F: Real>(q: &FrameSequence<F>, s: &FrameSequence<F>) -> Result<()> {
    if q.dim != s.dim {
        return Err(TatError::Argument(format!("embedding dims differ: {} vs {}", q.dim, s.dim)));
    }
    Ok(())
}

fn distance_matrix<F: Real>(q: &FrameSequence<F>, s: &FrameSequence<F>) -> Vec<F> {
    let mut m = Vec::with_capacity(q.frames * s.frames);
    for i in 0..q.frames {
        for j in 0..s.frames {
            m.push(frame_distance(q.row(i), s.row(j)));
        }
    }
    m
}

/// Sum in ascending order, so the result does not depend on frame order.
fn ordered_sum<F: Real>(mut values: Vec<F>) -> F {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values.into_iter().sum()
}

/// Index and value of the first minimum.
fn argmin<F: Real>(values: impl Iterator<Item = F>) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (k, v) in values.enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best
}

pub fn bi_mhm<F: Real>(query: &FrameSequence<F>, support: &FrameSequence<F>) -> Result<F> {
    check_dims(query, support)?;
    Ok(matrix_bi_mhm(&distance_matrix(query, support), query.frames, support.frames))
}

fn matrix_bi_mhm<F: Real>(m: &[F], tq: usize, ts: usize) -> F {
    let forward = ordered_sum((0..tq).map(|i| argmin((0..ts).map(|j| m[i * ts + j])).1).collect());
    let backward = ordered_sum((0..ts).map(|j| argmin((0..tq).map(|i| m[i * ts + j])).1).collect());
    forward / F::of(tq as f64) + backward / F::of(ts as f64)
}

/// Value and (sub)gradients with respect to both sequences. The gradient
/// follows the first minimizing frame on ties.
pub fn bi_mhm_with_grad<F: Real>(
    query: &FrameSequence<F>,
    support: &FrameSequence<F>,
) -> Result<(F, Vec<F>, Vec<F>)> {
    check_dims(query, support)?;
    let (tq, ts, d) = (query.frames, support.frames, query.dim);
    let m = distance_matrix(query, support);
    let mut gq = vec![F::zero(); query.data.len()];
    let mut gs = vec![F::zero(); support.data.len()];
    let wq = F::one() / F::of(tq as f64);
    let ws = F::one() / F::of(ts as f64);
    for i in 0..tq {
        let j = argmin((0..ts).map(|j| m[i * ts + j])).0;
        frame_distance_grad(
            query.row(i),
            support.row(j),
            wq,
            &mut gq[i * d..(i + 1) * d],
            &mut gs[j * d..(j + 1) * d],
        );
    }
    for j in 0..ts {
        let i = argmin((0..tq).map(|i| m[i * ts + j])).0;
        frame_distance_grad(
            query.row(i),
            support.row(j),
            ws,
            &mut gq[i * d..(i + 1) * d],
            &mut gs[j * d..(j + 1) * d],
        );
    }
    Ok((matrix_bi_mhm(&m, tq, ts), gq, gs))
}

/// Per-class scores over the episode's classes; higher is more likely.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLogits {
    pub values: Vec<f64>,
}

impl EpisodeLogits {
    /// First maximal class.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = c;
            }
        }
        best
    }
}

/// Mean Bi-MHM distance from the query to each class's supports.
pub fn class_distances<F: Real>(
    query: &FrameSequence<F>,
    supports: &[(&FrameSequence<F>, usize)],
    n_way: usize,
) -> Result<Vec<F>> {
    let mut sum = vec![F::zero(); n_way];
    let mut count = vec![0usize; n_way];
    for &(s, class) in supports {
        if class >= n_way {
            return Err(TatError::Argument(format!("support class {class} outside 0..{n_way}")));
        }
        sum[class] += bi_mhm(query, s)?;
        count[class] += 1;
    }
    if let Some(missing) = count.iter().position(|&c| c == 0) {
        return Err(TatError::Argument(format!("no supports for class {missing}")));
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| s / F::of(c as f64))
        .collect())
}

pub fn classify_query<F: Real>(
    query: &FrameSequence<F>,
    supports: &[(&FrameSequence<F>, usize)],
    n_way: usize,
) -> Result<EpisodeLogits> {
    let dist = class_distances(query, supports, n_way)?;
    Ok(EpisodeLogits {
        values: dist.into_iter().map(|d| -d.f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[&[f64]]) -> FrameSequence<f64> {
        let d = rows[0].len();
        FrameSequence::new(rows.len(), d, rows.concat()).unwrap()
    }

    #[test]
    fn frame_distance_cases() {
        assert!(frame_distance::<f64>(&[1.0, 2.0], &[1.0, 2.0]).abs() < 1e-15);
        assert_eq!(frame_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(frame_distance(&[2.0, 0.0], &[-2.0, 0.0]), 2.0);
        assert!((frame_distance::<f64>(&[1.0, -3.0], &[-1.0, 3.0]) - 2.0).abs() < 1e-15);
        assert_eq!(frame_distance_checked(&[0.0, 0.0], &[1.0, 0.0]), (1.0, true));
    }

    #[test]
    fn basis_example() {
        let q = seq(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let s = seq(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(bi_mhm(&q, &s).unwrap(), 1.0);
        assert_eq!(bi_mhm(&s, &q).unwrap(), 1.0);
        assert_eq!(bi_mhm(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let q = seq(&[&[1.0, 0.2, -0.3], &[0.1, 1.0, 0.4], &[0.5, 0.5, 0.9]]);
        let s = seq(&[&[0.9, -0.1, 0.2], &[-0.2, 0.8, 1.0]]);
        let (_, gq, gs) = bi_mhm_with_grad(&q, &s).unwrap();
        let eps = 1e-7;
        for k in 0..q.data.len() {
            let mut a = q.clone();
            a.data[k] += eps;
            let mut b = q.clone();
            b.data[k] -= eps;
            let num = (bi_mhm(&a, &s).unwrap() - bi_mhm(&b, &s).unwrap()) / (2.0 * eps);
            assert!((num - gq[k]).abs() < 1e-6, "q[{k}]");
        }
        for k in 0..s.data.len() {
            let mut a = s.clone();
            a.data[k] += eps;
            let mut b = s.clone();
            b.data[k] -= eps;
            let num = (bi_mhm(&q, &a).unwrap() - bi_mhm(&q, &b).unwrap()) / (2.0 * eps);
            assert!((num - gs[k]).abs() < 1e-6, "s[{k}]");
        }
    }

    #[test]
    fn classify_perfect_match() {
        let q = seq(&[&[1.0, 0.0, 0.0, 0.0]]);
        let s0 = q.clone();
        let s1 = seq(&[&[0.0, 1.0, 0.0, 0.0]]);
        let s2 = seq(&[&[0.0, 0.0, 1.0, 0.0]]);
        let logits = classify_query(&q, &[(&s1, 1), (&s0, 0), (&s2, 2)], 3).unwrap();
        assert_eq!(logits.argmax(), 0);
        assert!(classify_query(&q, &[(&s1, 1), (&s0, 0)], 3).is_err());
    }

    #[test]
    fn k_shot_mean() {
        let q = seq(&[&[1.0, 0.0]]);
        let perfect = q.clone();
        let ortho = seq(&[&[0.0, 1.0]]);
        let d = class_distances(&q, &[(&perfect, 0), (&ortho, 0), (&perfect, 1), (&ortho, 1)], 2).unwrap();
        assert_eq!(d, vec![1.0, 1.0]);
    }
}
