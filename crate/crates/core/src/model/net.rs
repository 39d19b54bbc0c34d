use super::ops::{
    attend_group, attend_group_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, linear,
    linear_backward, Group, NormCache,
};
use super::params::{block_slots, tail_slots, AttnSlots, ParameterSet, CLS, COORD_W, TEMPORAL_POS, TOKEN_B, TOKEN_W};
use super::{ModelConfig, ModelOutput, TemporalMask};
use crate::error::{Result, TatError};
use crate::features::TatTensor;
use crate::real::Real;

struct AttnCache<F> {
    norm: NormCache<F>,
    u: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    probs: Vec<Vec<F>>,
    o: Vec<F>,
}

struct BlockCache<F> {
    temporal: AttnCache<F>,
    spatial: AttnCache<F>,
    mlp_norm: NormCache<F>,
    mlp_u: Vec<F>,
    mlp_pre: Vec<F>,
    mlp_act: Vec<F>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<F> {
    frames: usize,
    points: usize,
    /// Valid trajectory tokens (CLS excluded).
    tokens: Vec<bool>,
    /// Valid tokens plus CLS.
    all: Vec<bool>,
    temporal_groups: Vec<Group>,
    spatial_groups: Vec<Group>,
    inputs: Vec<F>,
    coords: Vec<[F; 2]>,
    blocks: Vec<BlockCache<F>>,
    final_norm: NormCache<F>,
    z: Vec<F>,
    frame_counts: Vec<usize>,
}

/// Gradient with respect to the TAT features, `T x N x input_dim`.
pub struct InputGrad<F> {
    pub data: Vec<F>,
}

fn check_shapes(tats: &TatTensor, mask: &TemporalMask, cfg: &ModelConfig) -> Result<()> {
    cfg.validate()?;
    if mask.num_frames != tats.num_frames || mask.num_points != tats.num_points {
        return Err(TatError::Argument(format!(
            "mask is {}x{} but tokens are {}x{}",
            mask.num_frames, mask.num_points, tats.num_frames, tats.num_points
        )));
    }
    if tats.dim != cfg.input_dim {
        return Err(TatError::Argument(format!(
            "token dim {} does not match model input dim {}",
            tats.dim, cfg.input_dim
        )));
    }
    if tats.num_frames == 0 || tats.num_frames > cfg.max_frames {
        return Err(TatError::Argument(format!(
            "{} frames outside model range [1, {}]",
            tats.num_frames, cfg.max_frames
        )));
    }
    if tats.num_points == 0 {
        return Err(TatError::Argument("no tokens".into()));
    }
    Ok(())
}

fn ensure_finite<F: Real>(values: &[F], block: usize, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TatError::Numeric {
            block,
            message: format!("non-finite value in {what}"),
        })
    }
}

fn split_pair<F>(g: &mut ParameterSet<F>, a: usize, b: usize) -> (&mut [F], &mut [F]) {
    debug_assert!(a < b);
    let (lo, hi) = g.params.split_at_mut(b);
    (&mut lo[a].data, &mut hi[0].data)
}

struct Prepared<F> {
    frames: usize,
    points: usize,
    tokens: Vec<bool>,
    all: Vec<bool>,
    inputs: Vec<F>,
    coords: Vec<[F; 2]>,
}

fn prepare<F: Real>(tats: &TatTensor, mask: &TemporalMask) -> Prepared<F> {
    let (t_len, n, din) = (tats.num_frames, tats.num_points, tats.dim);
    let rows = 1 + t_len * n;
    let mut tokens = vec![false; rows];
    let mut inputs = vec![F::zero(); rows * din];
    let mut coords = vec![[F::zero(); 2]; rows];
    for t in 0..t_len {
        for i in 0..n {
            if !mask.is_valid(t, i) {
                continue;
            }
            let r = 1 + t * n + i;
            tokens[r] = true;
            for (dst, src) in inputs[r * din..(r + 1) * din].iter_mut().zip(tats.token(t, i)) {
                *dst = F::of(f64::from(*src));
            }
            let c = tats.coords[t * n + i];
            coords[r] = [F::of(f64::from(c[0])), F::of(f64::from(c[1]))];
        }
    }
    let mut all = tokens.clone();
    all[0] = true;
    Prepared {
        frames: t_len,
        points: n,
        tokens,
        all,
        inputs,
        coords,
    }
}

/// Token sequence before the first block, `(T * N + 1) x D` with CLS at row
/// 0, and the per-row activity flags. Masked rows are zero.
pub fn embed_tokens<F: Real>(
    tats: &TatTensor,
    mask: &TemporalMask,
    params: &ParameterSet<F>,
    cfg: &ModelConfig,
) -> Result<(Vec<F>, Vec<bool>)> {
    check_shapes(tats, mask, cfg)?;
    let prep = prepare::<F>(tats, mask);
    let h = embed(&prep, params, cfg);
    Ok((h, prep.all))
}

fn embed<F: Real>(prep: &Prepared<F>, params: &ParameterSet<F>, cfg: &ModelConfig) -> Vec<F> {
    let d = cfg.dim;
    let mut h = linear(
        &prep.inputs,
        cfg.input_dim,
        params.data(TOKEN_W),
        Some(params.data(TOKEN_B)),
        d,
        &prep.tokens,
    );
    let pos = params.data(TEMPORAL_POS);
    let wc = params.data(COORD_W);
    for t in 0..prep.frames {
        for i in 0..prep.points {
            let r = 1 + t * prep.points + i;
            if !prep.tokens[r] {
                continue;
            }
            let [cx, cy] = prep.coords[r];
            let row = &mut h[r * d..(r + 1) * d];
            for o in 0..d {
                row[o] += pos[t * d + o] + wc[2 * o] * cx + wc[2 * o + 1] * cy;
            }
        }
    }
    h[..d].copy_from_slice(params.data(CLS));
    h
}

fn temporal_groups(frames: usize, points: usize, tokens: &[bool]) -> Vec<Group> {
    (0..points)
        .filter_map(|i| {
            let rows: Vec<usize> = (0..frames)
                .map(|t| 1 + t * points + i)
                .filter(|&r| tokens[r])
                .collect();
            (!rows.is_empty()).then(|| Group {
                out_scale: vec![1.0; rows.len()],
                rows,
            })
        })
        .collect()
}

fn spatial_groups(frames: usize, points: usize, tokens: &[bool]) -> Vec<Group> {
    (0..frames)
        .map(|t| {
            let mut rows = vec![0];
            rows.extend((0..points).map(|i| 1 + t * points + i).filter(|&r| tokens[r]));
            let mut out_scale = vec![1.0; rows.len()];
            out_scale[0] = 1.0 / frames as f64;
            Group { rows, out_scale }
        })
        .collect()
}

fn attention_forward<F: Real>(
    h: &mut [F],
    params: &ParameterSet<F>,
    s: &AttnSlots,
    groups: &[Group],
    active: &[bool],
    cfg: &ModelConfig,
) -> AttnCache<F> {
    let d = cfg.dim;
    let (u, norm) = layer_norm(h, d, params.data(s.norm_g), params.data(s.norm_b), active);
    let q = linear(&u, d, params.data(s.wq), Some(params.data(s.bq)), d, active);
    let k = linear(&u, d, params.data(s.wk), Some(params.data(s.bk)), d, active);
    let v = linear(&u, d, params.data(s.wv), Some(params.data(s.bv)), d, active);
    let mut o = vec![F::zero(); h.len()];
    let probs = groups
        .iter()
        .map(|g| attend_group(g, &q, &k, &v, d, cfg.heads, &mut o))
        .collect();
    let a = linear(&o, d, params.data(s.wo), Some(params.data(s.bo)), d, active);
    for (r, &on) in active.iter().enumerate() {
        if on {
            for j in 0..d {
                h[r * d + j] += a[r * d + j];
            }
        }
    }
    AttnCache {
        norm,
        u,
        q,
        k,
        v,
        probs,
        o,
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<F: Real>(
    dh: &mut [F],
    cache: &AttnCache<F>,
    params: &ParameterSet<F>,
    grads: &mut ParameterSet<F>,
    s: &AttnSlots,
    groups: &[Group],
    active: &[bool],
    cfg: &ModelConfig,
) {
    let d = cfg.dim;
    let mut da = vec![F::zero(); dh.len()];
    for (r, &on) in active.iter().enumerate() {
        if on {
            da[r * d..(r + 1) * d].copy_from_slice(&dh[r * d..(r + 1) * d]);
        }
    }
    let mut d_o = vec![F::zero(); dh.len()];
    {
        let (dw, db) = split_pair(grads, s.wo, s.bo);
        linear_backward(&cache.o, d, params.data(s.wo), &da, d, active, dw, Some(db), Some(&mut d_o));
    }
    let mut dq = vec![F::zero(); dh.len()];
    let mut dk = vec![F::zero(); dh.len()];
    let mut dv = vec![F::zero(); dh.len()];
    for (g, probs) in groups.iter().zip(&cache.probs) {
        attend_group_backward(g, probs, &cache.q, &cache.k, &cache.v, &d_o, d, cfg.heads, &mut dq, &mut dk, &mut dv);
    }
    let mut du = vec![F::zero(); dh.len()];
    for (w, b, dy) in [(s.wq, s.bq, &dq), (s.wk, s.bk, &dk), (s.wv, s.bv, &dv)] {
        let (dw, db) = split_pair(grads, w, b);
        linear_backward(&cache.u, d, params.data(w), dy, d, active, dw, Some(db), Some(&mut du));
    }
    let (dg, db) = split_pair(grads, s.norm_g, s.norm_b);
    layer_norm_backward(&du, &cache.norm, d, params.data(s.norm_g), active, dg, db, dh);
}

/// Forward pass keeping every activation needed by [`backward_with_cache`].
pub fn forward_with_cache<F: Real>(
    tats: &TatTensor,
    mask: &TemporalMask,
    params: &ParameterSet<F>,
    cfg: &ModelConfig,
) -> Result<(ModelOutput<F>, ForwardCache<F>)> {
    check_shapes(tats, mask, cfg)?;
    let prep = prepare::<F>(tats, mask);
    let d = cfg.dim;
    let hidden = cfg.hidden_dim();
    let mut h = embed(&prep, params, cfg);
    ensure_finite(&h, 0, "token embedding")?;

    let tg = temporal_groups(prep.frames, prep.points, &prep.tokens);
    let sg = spatial_groups(prep.frames, prep.points, &prep.tokens);
    let mut blocks = Vec::with_capacity(cfg.depth);
    for b in 0..cfg.depth {
        let s = block_slots(b);
        let temporal = attention_forward(&mut h, params, &s.temporal, &tg, &prep.tokens, cfg);
        ensure_finite(&h, b, "temporal attention")?;
        let spatial = attention_forward(&mut h, params, &s.spatial, &sg, &prep.all, cfg);
        ensure_finite(&h, b, "spatial attention")?;

        let (mlp_u, mlp_norm) = layer_norm(&h, d, params.data(s.norm_g), params.data(s.norm_b), &prep.all);
        let mlp_pre = linear(&mlp_u, d, params.data(s.w1), Some(params.data(s.b1)), hidden, &prep.all);
        let mlp_act: Vec<F> = mlp_pre.iter().map(|&x| gelu(x)).collect();
        let m = linear(&mlp_act, hidden, params.data(s.w2), Some(params.data(s.b2)), d, &prep.all);
        for (r, &on) in prep.all.iter().enumerate() {
            if on {
                for j in 0..d {
                    h[r * d + j] += m[r * d + j];
                }
            }
        }
        ensure_finite(&h, b, "mlp")?;
        blocks.push(BlockCache {
            temporal,
            spatial,
            mlp_norm,
            mlp_u,
            mlp_pre,
            mlp_act,
        });
    }

    let tail = tail_slots(cfg.depth);
    let (z, final_norm) = layer_norm(&h, d, params.data(tail.norm_g), params.data(tail.norm_b), &prep.all);
    let mut frame_embedding = vec![F::zero(); prep.frames * d];
    let mut frame_counts = vec![0usize; prep.frames];
    for t in 0..prep.frames {
        let f = &mut frame_embedding[t * d..(t + 1) * d];
        for i in 0..prep.points {
            let r = 1 + t * prep.points + i;
            if prep.tokens[r] {
                frame_counts[t] += 1;
                for j in 0..d {
                    f[j] += z[r * d + j];
                }
            }
        }
        if frame_counts[t] > 0 {
            let inv = F::one() / F::of(frame_counts[t] as f64);
            f.iter_mut().for_each(|v| *v *= inv);
        }
    }
    let head_w = params.data(tail.head_w);
    let head_b = params.data(tail.head_b);
    let cls_logits: Vec<F> = (0..cfg.num_base_classes)
        .map(|c| head_b[c] + super::ops::dot(&z[..d], &head_w[c * d..(c + 1) * d]))
        .collect();
    ensure_finite(&cls_logits, cfg.depth, "head")?;

    let output = ModelOutput {
        num_frames: prep.frames,
        dim: d,
        frame_embedding,
        cls_logits,
        full_sequence: z.clone(),
    };
    let cache = ForwardCache {
        frames: prep.frames,
        points: prep.points,
        tokens: prep.tokens,
        all: prep.all,
        temporal_groups: tg,
        spatial_groups: sg,
        inputs: prep.inputs,
        coords: prep.coords,
        blocks,
        final_norm,
        z,
        frame_counts,
    };
    Ok((output, cache))
}

pub fn forward<F: Real>(
    tats: &TatTensor,
    mask: &TemporalMask,
    params: &ParameterSet<F>,
    cfg: &ModelConfig,
) -> Result<ModelOutput<F>> {
    forward_with_cache(tats, mask, params, cfg).map(|(out, _)| out)
}

/// Reverse pass given cotangents of the frame embeddings (`T x D`) and CLS
/// logits. Returns parameter gradients and the gradient of the TAT features,
/// which is zero at masked positions.
pub fn backward_with_cache<F: Real>(
    cache: &ForwardCache<F>,
    params: &ParameterSet<F>,
    cfg: &ModelConfig,
    grad_frames: &[F],
    grad_logits: &[F],
) -> Result<(ParameterSet<F>, InputGrad<F>)> {
    let d = cfg.dim;
    let hidden = cfg.hidden_dim();
    if grad_frames.len() != cache.frames * d || grad_logits.len() != cfg.num_base_classes {
        return Err(TatError::Argument("output gradient shape mismatch".into()));
    }
    let mut grads = params.zeros_like();
    let rows = cache.all.len();
    let tail = tail_slots(cfg.depth);

    let mut dz = vec![F::zero(); rows * d];
    {
        let head_w = params.data(tail.head_w);
        let (dw, db) = split_pair(&mut grads, tail.head_w, tail.head_b);
        for (c, &g) in grad_logits.iter().enumerate() {
            db[c] += g;
            for j in 0..d {
                dw[c * d + j] += g * cache.z[j];
                dz[j] += g * head_w[c * d + j];
            }
        }
    }
    for t in 0..cache.frames {
        if cache.frame_counts[t] == 0 {
            continue;
        }
        let inv = F::one() / F::of(cache.frame_counts[t] as f64);
        for i in 0..cache.points {
            let r = 1 + t * cache.points + i;
            if cache.tokens[r] {
                for j in 0..d {
                    dz[r * d + j] += grad_frames[t * d + j] * inv;
                }
            }
        }
    }
    let mut dh = vec![F::zero(); rows * d];
    {
        let (dg, db) = split_pair(&mut grads, tail.norm_g, tail.norm_b);
        layer_norm_backward(&dz, &cache.final_norm, d, params.data(tail.norm_g), &cache.all, dg, db, &mut dh);
    }

    for b in (0..cfg.depth).rev() {
        let s = block_slots(b);
        let bc = &cache.blocks[b];
        let mut dact = vec![F::zero(); rows * hidden];
        {
            let (dw, db) = split_pair(&mut grads, s.w2, s.b2);
            linear_backward(&bc.mlp_act, hidden, params.data(s.w2), &dh, d, &cache.all, dw, Some(db), Some(&mut dact));
        }
        for (g, &x) in dact.iter_mut().zip(&bc.mlp_pre) {
            *g *= gelu_grad(x);
        }
        let mut du = vec![F::zero(); rows * d];
        {
            let (dw, db) = split_pair(&mut grads, s.w1, s.b1);
            linear_backward(&bc.mlp_u, d, params.data(s.w1), &dact, hidden, &cache.all, dw, Some(db), Some(&mut du));
        }
        {
            let (dg, db) = split_pair(&mut grads, s.norm_g, s.norm_b);
            layer_norm_backward(&du, &bc.mlp_norm, d, params.data(s.norm_g), &cache.all, dg, db, &mut dh);
        }
        attention_backward(&mut dh, &bc.spatial, params, &mut grads, &s.spatial, &cache.spatial_groups, &cache.all, cfg);
        attention_backward(&mut dh, &bc.temporal, params, &mut grads, &s.temporal, &cache.temporal_groups, &cache.tokens, cfg);
        ensure_finite(&dh, b, "backward pass")?;
    }

    grads.data_mut(CLS).copy_from_slice(&dh[..d]);
    let mut dx = vec![F::zero(); rows * cfg.input_dim];
    {
        let (dw, db) = split_pair(&mut grads, TOKEN_W, TOKEN_B);
        linear_backward(&cache.inputs, cfg.input_dim, params.data(TOKEN_W), &dh, d, &cache.tokens, dw, Some(db), Some(&mut dx));
    }
    for t in 0..cache.frames {
        for i in 0..cache.points {
            let r = 1 + t * cache.points + i;
            if !cache.tokens[r] {
                continue;
            }
            let [cx, cy] = cache.coords[r];
            for o in 0..d {
                let g = dh[r * d + o];
                grads.data_mut(TEMPORAL_POS)[t * d + o] += g;
                let wc = grads.data_mut(COORD_W);
                wc[2 * o] += g * cx;
                wc[2 * o + 1] += g * cy;
            }
        }
    }
    Ok((
        grads,
        InputGrad {
            data: dx.split_off(cfg.input_dim),
        },
    ))
}

/// Recomputes the forward pass, then runs [`backward_with_cache`].
pub fn backward<F: Real>(
    tats: &TatTensor,
    mask: &TemporalMask,
    params: &ParameterSet<F>,
    cfg: &ModelConfig,
    grad_frames: &[F],
    grad_logits: &[F],
) -> Result<(ParameterSet<F>, InputGrad<F>)> {
    let (_, cache) = forward_with_cache(tats, mask, params, cfg)?;
    backward_with_cache(&cache, params, cfg, grad_frames, grad_logits)
}
