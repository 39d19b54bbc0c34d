//! Dense kernels with hand-written backward passes. Matrices are row-major
//! `rows x cols` slices; `active[r] == false` rows are skipped entirely.

use crate::real::Real;

pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [F::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[4]) + (acc[1] + acc[5]) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for i in chunks * 8..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `y = x W^T + b` with `W` stored `out_dim x in_dim`.
pub(crate) fn linear<F: Real>(
    x: &[F],
    in_dim: usize,
    w: &[F],
    b: Option<&[F]>,
    out_dim: usize,
    active: &[bool],
) -> Vec<F> {
    let rows = active.len();
    // transposed so each input feature adds a contiguous row to the output
    let mut wt = vec![F::zero(); in_dim * out_dim];
    for o in 0..out_dim {
        for i in 0..in_dim {
            wt[i * out_dim + o] = w[o * in_dim + i];
        }
    }
    let mut y = vec![F::zero(); rows * out_dim];
    for r in 0..rows {
        if !active[r] {
            continue;
        }
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let yr = &mut y[r * out_dim..(r + 1) * out_dim];
        if let Some(b) = b {
            yr.copy_from_slice(b);
        }
        for (i, &xi) in xr.iter().enumerate() {
            axpy(xi, &wt[i * out_dim..(i + 1) * out_dim], yr);
        }
    }
    y
}

/// Accumulates `dW += dy^T x`, `db += sum(dy)` and, when given, `dx += dy W`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<F: Real>(
    x: &[F],
    in_dim: usize,
    w: &[F],
    dy: &[F],
    out_dim: usize,
    active: &[bool],
    dw: &mut [F],
    mut db: Option<&mut [F]>,
    mut dx: Option<&mut [F]>,
) {
    for r in 0..active.len() {
        if !active[r] {
            continue;
        }
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let dyr = &dy[r * out_dim..(r + 1) * out_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            axpy(g, xr, &mut dw[o * in_dim..(o + 1) * in_dim]);
            if let Some(db) = db.as_deref_mut() {
                db[o] += g;
            }
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, &w[o * in_dim..(o + 1) * in_dim], &mut dx[r * in_dim..(r + 1) * in_dim]);
            }
        }
    }
}

pub(crate) struct NormCache<F> {
    pub xhat: Vec<F>,
    pub rstd: Vec<F>,
}

pub(crate) fn layer_norm<F: Real>(
    x: &[F],
    dim: usize,
    gamma: &[F],
    beta: &[F],
    active: &[bool],
) -> (Vec<F>, NormCache<F>) {
    let rows = active.len();
    let mut y = vec![F::zero(); rows * dim];
    let mut xhat = vec![F::zero(); rows * dim];
    let mut rstd = vec![F::zero(); rows];
    let n = F::of(dim as f64);
    for r in 0..rows {
        if !active[r] {
            continue;
        }
        let xr = &x[r * dim..(r + 1) * dim];
        let mean = xr.iter().copied().sum::<F>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let rs = F::one() / (var + F::of(LN_EPS)).sqrt();
        rstd[r] = rs;
        for j in 0..dim {
            let h = (xr[j] - mean) * rs;
            xhat[r * dim + j] = h;
            y[r * dim + j] = h * gamma[j] + beta[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Accumulates parameter gradients and `dx += d(norm)/dx^T dy`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward<F: Real>(
    dy: &[F],
    cache: &NormCache<F>,
    dim: usize,
    gamma: &[F],
    active: &[bool],
    dgamma: &mut [F],
    dbeta: &mut [F],
    dx: &mut [F],
) {
    let n = F::of(dim as f64);
    let mut g = vec![F::zero(); dim];
    for r in 0..active.len() {
        if !active[r] {
            continue;
        }
        let dyr = &dy[r * dim..(r + 1) * dim];
        let xh = &cache.xhat[r * dim..(r + 1) * dim];
        for j in 0..dim {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            g[j] = dyr[j] * gamma[j];
        }
        let mean_g = g.iter().copied().sum::<F>() / n;
        let mean_gx = dot(&g, xh) / n;
        let rs = cache.rstd[r];
        for j in 0..dim {
            dx[r * dim + j] += rs * (g[j] - mean_g - xh[j] * mean_gx);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
pub(crate) fn gelu<F: Real>(x: F) -> F {
    let u = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    F::of(0.5) * x * (F::one() + u.tanh())
}

#[inline]
pub(crate) fn gelu_grad<F: Real>(x: F) -> F {
    let u = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = F::of(GELU_C) * (F::one() + F::of(3.0 * GELU_A) * x * x);
    F::of(0.5) * (F::one() + t) + F::of(0.5) * x * (F::one() - t * t) * du
}

/// One attention group: a list of rows that attend among themselves.
pub(crate) struct Group {
    pub rows: Vec<usize>,
    /// Output scale per member row; the CLS row is averaged over groups.
    pub out_scale: Vec<f64>,
}

/// Copies head `off..off + dh` of the group's rows into a `dh x n` matrix,
/// so that the inner loops below run over the whole group contiguously.
fn gather_transposed<F: Real>(rows: &[usize], x: &[F], dim: usize, off: usize, dh: usize, out: &mut [F]) {
    let n = rows.len();
    for (bi, &b) in rows.iter().enumerate() {
        for j in 0..dh {
            out[j * n + bi] = x[b * dim + off + j];
        }
    }
}

fn scatter_transposed<F: Real>(rows: &[usize], src: &[F], dim: usize, off: usize, dh: usize, x: &mut [F]) {
    let n = rows.len();
    for (bi, &b) in rows.iter().enumerate() {
        for j in 0..dh {
            x[b * dim + off + j] += src[j * n + bi];
        }
    }
}

/// Multi-head attention for one group. Writes `scale * softmax(QK^T) V` into
/// `o` (accumulating) and returns the probabilities, `heads x n x n`.
pub(crate) fn attend_group<F: Real>(
    group: &Group,
    q: &[F],
    k: &[F],
    v: &[F],
    dim: usize,
    heads: usize,
    o: &mut [F],
) -> Vec<F> {
    let n = group.rows.len();
    let dh = dim / heads;
    let scale = F::of(1.0 / (dh as f64).sqrt());
    let mut probs = vec![F::zero(); heads * n * n];
    let mut kt = vec![F::zero(); dh * n];
    let mut vt = vec![F::zero(); dh * n];
    for h in 0..heads {
        let off = h * dh;
        gather_transposed(&group.rows, k, dim, off, dh, &mut kt);
        gather_transposed(&group.rows, v, dim, off, dh, &mut vt);
        for (ai, &a) in group.rows.iter().enumerate() {
            let qa = &q[a * dim + off..a * dim + off + dh];
            let p = &mut probs[(h * n + ai) * n..(h * n + ai + 1) * n];
            for (j, &qj) in qa.iter().enumerate() {
                axpy(qj * scale, &kt[j * n..(j + 1) * n], p);
            }
            let max = p.iter().copied().fold(F::neg_infinity(), |m, x| if x > m { x } else { m });
            let mut total = F::zero();
            for s in p.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            let inv = F::one() / total;
            p.iter_mut().for_each(|s| *s *= inv);
            let out_scale = F::of(group.out_scale[ai]);
            let oa = &mut o[a * dim + off..a * dim + off + dh];
            for (j, oj) in oa.iter_mut().enumerate() {
                *oj += out_scale * dot(p, &vt[j * n..(j + 1) * n]);
            }
        }
    }
    probs
}

/// Backward of [`attend_group`], accumulating into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend_group_backward<F: Real>(
    group: &Group,
    probs: &[F],
    q: &[F],
    k: &[F],
    v: &[F],
    d_o: &[F],
    dim: usize,
    heads: usize,
    dq: &mut [F],
    dk: &mut [F],
    dv: &mut [F],
) {
    let n = group.rows.len();
    let dh = dim / heads;
    let scale = F::of(1.0 / (dh as f64).sqrt());
    let mut dp = vec![F::zero(); n];
    let mut doa = vec![F::zero(); dh];
    let mut kt = vec![F::zero(); dh * n];
    let mut vt = vec![F::zero(); dh * n];
    let mut dkt = vec![F::zero(); dh * n];
    let mut dvt = vec![F::zero(); dh * n];
    for h in 0..heads {
        let off = h * dh;
        gather_transposed(&group.rows, k, dim, off, dh, &mut kt);
        gather_transposed(&group.rows, v, dim, off, dh, &mut vt);
        dkt.iter_mut().for_each(|x| *x = F::zero());
        dvt.iter_mut().for_each(|x| *x = F::zero());
        for (ai, &a) in group.rows.iter().enumerate() {
            let out_scale = F::of(group.out_scale[ai]);
            for (j, d) in doa.iter_mut().enumerate() {
                *d = d_o[a * dim + off + j] * out_scale;
            }
            let p = &probs[(h * n + ai) * n..(h * n + ai + 1) * n];
            dp.iter_mut().for_each(|x| *x = F::zero());
            for (j, &g) in doa.iter().enumerate() {
                axpy(g, &vt[j * n..(j + 1) * n], &mut dp);
                axpy(g, p, &mut dvt[j * n..(j + 1) * n]);
            }
            let weighted = dot(p, &dp);
            // dp becomes the score gradient in place
            for (d, &pb) in dp.iter_mut().zip(p) {
                *d = pb * (*d - weighted) * scale;
            }
            let qa = a * dim + off;
            for j in 0..dh {
                dq[qa + j] += dot(&dp, &kt[j * n..(j + 1) * n]);
                axpy(q[qa + j], &dp, &mut dkt[j * n..(j + 1) * n]);
            }
        }
        scatter_transposed(&group.rows, &dkt, dim, off, dh, dk);
        scatter_transposed(&group.rows, &dvt, dim, off, dh, dv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<Fn1: Fn(&[f64]) -> f64>(f: Fn1, x: &[f64], i: usize) -> f64 {
        let eps = 1e-6;
        let mut a = x.to_vec();
        a[i] += eps;
        let mut b = x.to_vec();
        b[i] -= eps;
        (f(&a) - f(&b)) / (2.0 * eps)
    }

    #[test]
    fn gelu_derivative() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((gelu_grad(x) - num).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_gradient() {
        let x = [0.3, -1.2, 2.0, 0.7, 0.1, 0.1, -0.4, 0.9];
        let gamma = [1.5, 0.5, -1.0, 2.0];
        let beta = [0.1, 0.2, 0.3, 0.4];
        let w = [0.7, -0.3, 0.2, 1.1, -0.5, 0.6, 0.9, -1.3];
        let active = [true, true];
        let loss = |x: &[f64]| {
            let (y, _) = layer_norm(x, 4, &gamma, &beta, &active);
            y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = layer_norm(&x, 4, &gamma, &beta, &active);
        let mut dx = [0.0; 8];
        let (mut dg, mut db) = ([0.0; 4], [0.0; 4]);
        layer_norm_backward(&w, &cache, 4, &gamma, &active, &mut dg, &mut db, &mut dx);
        for i in 0..8 {
            assert!((dx[i] - fd(loss, &x, i)).abs() < 1e-7, "{i}");
        }
    }

    #[test]
    fn attention_gradient() {
        let dim = 4;
        let heads = 2;
        let group = Group { rows: vec![0, 2, 3], out_scale: vec![1.0, 0.5, 1.0] };
        let rows = 4;
        let base: Vec<f64> = (0..3 * rows * dim).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
        let w: Vec<f64> = (0..rows * dim).map(|i| ((i * 13 % 7) as f64 - 3.0) / 3.0).collect();
        let loss = |x: &[f64]| {
            let (q, rest) = x.split_at(rows * dim);
            let (k, v) = rest.split_at(rows * dim);
            let mut o = vec![0.0; rows * dim];
            attend_group(&group, q, k, v, dim, heads, &mut o);
            o.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (q, rest) = base.split_at(rows * dim);
        let (k, v) = rest.split_at(rows * dim);
        let mut o = vec![0.0; rows * dim];
        let probs = attend_group(&group, q, k, v, dim, heads, &mut o);
        let mut grads = vec![0.0; 3 * rows * dim];
        let (dq, rest) = grads.split_at_mut(rows * dim);
        let (dk, dv) = rest.split_at_mut(rows * dim);
        attend_group_backward(&group, &probs, q, k, v, &w, dim, heads, dq, dk, dv);
        for i in 0..base.len() {
            assert!((grads[i] - fd(loss, &base, i)).abs() < 1e-7, "{i}");
        }
    }
}
