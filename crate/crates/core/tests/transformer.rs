use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tat_core::features::TatTensor;
use tat_core::model::{backward, embed_tokens, forward, ModelConfig, ParameterSet, TemporalMask};

fn random_tats(rng: &mut ChaCha8Rng, t: usize, n: usize, d: usize, init: &[usize]) -> TatTensor {
    let mut tats = TatTensor::zeros(t, n, d);
    for (i, &q) in init.iter().enumerate() {
        for f in q..t {
            tats.valid[f * n + i] = true;
            tats.coords[f * n + i] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            for v in tats.token_mut(f, i) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
    tats
}

/// Smooth scalar of the outputs: random linear functional plus a quadratic.
fn scalar_loss(frames: &[f64], logits: &[f64], a: &[f64], b: &[f64]) -> f64 {
    frames.iter().zip(a).map(|(x, w)| x * w + 0.5 * x * x).sum::<f64>()
        + logits.iter().zip(b).map(|(x, w)| x * w).sum::<f64>()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = ModelConfig::small(5, 3, 3);
    let mut params = ParameterSet::<f64>::init(&cfg);
    // non-trivial biases and norms so every tensor has a generic gradient
    for p in params.params.iter_mut() {
        for v in p.data.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let tats = random_tats(&mut rng, 3, 2, 5, &[0, 1]);
    let mask = TemporalMask::from_tats(&tats);
    let a: Vec<f64> = (0..3 * cfg.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();

    let out = forward(&tats, &mask, &params, &cfg).unwrap();
    let gf: Vec<f64> = out.frame_embedding.iter().zip(&a).map(|(x, w)| w + x).collect();
    let (grads, input_grad) = backward(&tats, &mask, &params, &cfg, &gf, &b).unwrap();

    let eps = 1e-4;
    for (k, p) in params.params.iter().enumerate() {
        let mut num = vec![0.0; p.data.len()];
        for j in 0..p.data.len() {
            let mut plus = params.clone();
            plus.params[k].data[j] += eps;
            let mut minus = params.clone();
            minus.params[k].data[j] -= eps;
            let op = forward(&tats, &mask, &plus, &cfg).unwrap();
            let om = forward(&tats, &mask, &minus, &cfg).unwrap();
            num[j] = (scalar_loss(&op.frame_embedding, &op.cls_logits, &a, &b)
                - scalar_loss(&om.frame_embedding, &om.cls_logits, &a, &b))
                / (2.0 * eps);
        }
        let ana = &grads.params[k].data;
        let diff: f64 = ana.iter().zip(&num).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = ana.iter().map(|x| x * x).sum::<f64>().sqrt().max(num.iter().map(|x| x * x).sum::<f64>().sqrt());
        // the key bias cannot change a softmax row, so its gradient is
        // identically zero; compare such tensors absolutely
        if scale < 1e-7 {
            assert!(diff < 1e-9, "{}: expected zero gradient, diff {diff}", p.name);
            continue;
        }
        let rel = diff / scale;
        assert!(rel < 1e-4, "{}: relative error {rel}", p.name);
    }
    // masked inputs: trajectory 1 starts at frame 1
    assert!(input_grad.data[5..10].iter().all(|&g| g == 0.0));
}

#[test]
fn embedding_shape_and_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = ModelConfig::small(4, 4, 2);
    let params = ParameterSet::<f64>::init(&cfg);
    let mut tats = random_tats(&mut rng, 4, 3, 4, &[0, 0, 2]);
    // trajectory 1 copies trajectory 0 exactly
    for t in 0..4 {
        let src = tats.token(t, 0).to_vec();
        tats.token_mut(t, 1).copy_from_slice(&src);
        tats.coords[t * 3 + 1] = tats.coords[t * 3];
    }
    let mask = TemporalMask::from_tats(&tats);
    let (h, active) = embed_tokens(&tats, &mask, &params, &cfg).unwrap();
    let d = cfg.dim;
    assert_eq!(h.len(), (4 * 3 + 1) * d);
    assert_eq!(active.len(), 13);
    for t in 0..4 {
        let r0 = 1 + t * 3;
        assert_eq!(h[r0 * d..(r0 + 1) * d], h[(r0 + 1) * d..(r0 + 2) * d]);
    }
    // masked rows are zero
    assert!(h[(1 + 2) * d..(1 + 3) * d].iter().all(|&v| v == 0.0));
}

fn shuffled_model(seed: u64, cfg: &ModelConfig) -> ParameterSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::<f64>::init(cfg);
    for p in params.params.iter_mut() {
        for v in p.data.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    params
}

#[test]
fn output_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = ModelConfig {
        dim: 32,
        depth: 2,
        heads: 4,
        mlp_ratio: 2,
        num_base_classes: 5,
        input_dim: 6,
        max_frames: 8,
        seed: 2,
    };
    let tats = random_tats(&mut rng, 8, 4, 6, &[0, 0, 3, 7]);
    let params = ParameterSet::<f32>::init(&cfg);
    let out = forward(&tats, &TemporalMask::from_tats(&tats), &params, &cfg).unwrap();
    assert_eq!((out.num_frames, out.dim), (8, 32));
    assert_eq!(out.frame_embedding.len(), 8 * 32);
    assert_eq!(out.cls_logits.len(), 5);
    assert_eq!(out.full_sequence.len(), (8 * 4 + 1) * 32);
    let again = forward(&tats, &TemporalMask::from_tats(&tats), &params, &cfg).unwrap();
    assert_eq!(out, again);
}

#[test]
fn masked_content_is_ignored() {
    let cfg = ModelConfig::small(5, 6, 3);
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let params = shuffled_model(seed, &cfg);
        let tats = random_tats(&mut rng, 6, 4, 5, &[0, 2, 5, 1]);
        let mask = TemporalMask::from_tats(&tats);
        let out = forward(&tats, &mask, &params, &cfg).unwrap();
        let mut noisy = tats.clone();
        for t in 0..6 {
            for i in 0..4 {
                if !mask.is_valid(t, i) {
                    noisy.token_mut(t, i).iter_mut().for_each(|v| *v = rng.random_range(-50.0..50.0));
                    noisy.coords[t * 4 + i] = [rng.random_range(-9.0..9.0), 3.0];
                }
            }
        }
        let other = forward(&noisy, &mask, &params, &cfg).unwrap();
        let diff = out
            .frame_embedding
            .iter()
            .chain(&out.cls_logits)
            .zip(other.frame_embedding.iter().chain(&other.cls_logits))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-6, "seed {seed}: {diff}");
    }
}

#[test]
fn trajectory_order_does_not_matter() {
    let cfg = ModelConfig::small(4, 5, 3);
    let params = shuffled_model(7, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let init = [0, 1, 0, 3, 2];
    let tats = random_tats(&mut rng, 5, 5, 4, &init);
    let perm = [3, 0, 4, 2, 1];
    let mut moved = TatTensor::zeros(5, 5, 4);
    for t in 0..5 {
        for (dst, &src) in perm.iter().enumerate() {
            moved.token_mut(t, dst).copy_from_slice(tats.token(t, src));
            moved.valid[t * 5 + dst] = tats.valid[t * 5 + src];
            moved.coords[t * 5 + dst] = tats.coords[t * 5 + src];
        }
    }
    let a = forward(&tats, &TemporalMask::from_tats(&tats), &params, &cfg).unwrap();
    let b = forward(&moved, &TemporalMask::from_tats(&moved), &params, &cfg).unwrap();
    for (x, y) in a.frame_embedding.iter().chain(&a.cls_logits).zip(b.frame_embedding.iter().chain(&b.cls_logits)) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn empty_frames_embed_to_zero_without_gradient() {
    let cfg = ModelConfig::small(3, 4, 2);
    let params = shuffled_model(2, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tats = random_tats(&mut rng, 4, 2, 3, &[2, 3]);
    let mask = TemporalMask::from_tats(&tats);
    let out = forward(&tats, &mask, &params, &cfg).unwrap();
    let d = cfg.dim;
    assert!(out.frame_embedding[..2 * d].iter().all(|&v| v == 0.0));
    assert!(out.frame_embedding[2 * d..].iter().any(|&v| v != 0.0));

    let gl = vec![0.3, -0.2];
    let mut gf: Vec<f64> = (0..4 * d).map(|k| (k as f64 * 0.1).sin()).collect();
    let (with_empty, _) = backward(&tats, &mask, &params, &cfg, &gf, &gl).unwrap();
    gf[..2 * d].iter_mut().for_each(|g| *g = 0.0);
    let (without, _) = backward(&tats, &mask, &params, &cfg, &gf, &gl).unwrap();
    assert_eq!(with_empty, without);

    let zero_f = vec![0.0; 4 * d];
    let (g, input) = backward(&tats, &mask, &params, &cfg, &zero_f, &[0.0, 0.0]).unwrap();
    assert!(g.params.iter().all(|p| p.data.iter().all(|&v| v == 0.0)));
    assert!(input.data.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_features_and_coords_leave_positional_terms() {
    let cfg = ModelConfig::small(3, 4, 2);
    let params = shuffled_model(5, &cfg);
    let mut tats = TatTensor::zeros(4, 2, 3);
    tats.valid.iter_mut().for_each(|v| *v = true);
    let (h, _) = embed_tokens(&tats, &TemporalMask::from_tats(&tats), &params, &cfg).unwrap();
    let d = cfg.dim;
    let bias = &params.get("token_proj.bias").unwrap().data;
    let pos = &params.get("temporal_pos").unwrap().data;
    for t in 0..4 {
        for i in 0..2 {
            let r = 1 + t * 2 + i;
            for o in 0..d {
                assert!((h[r * d + o] - bias[o] - pos[t * d + o]).abs() < 1e-15);
            }
        }
    }
    assert_eq!(h[..d], params.get("cls_token").unwrap().data[..]);
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| (v - mean) / (var + 1e-5).sqrt() * g + b)
        .collect()
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter().enumerate().map(|(o, bo)| bo + (0..x.len()).map(|i| w[o * x.len() + i] * x[i]).sum::<f64>()).collect()
}

#[test]
fn without_attention_the_block_is_an_mlp() {
    let cfg = ModelConfig::small(3, 3, 2);
    let mut params = shuffled_model(6, &cfg);
    for p in params.params.iter_mut() {
        if p.name.contains("temporal.") || p.name.contains("spatial.") {
            if !p.name.contains("norm") {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tats = random_tats(&mut rng, 3, 2, 3, &[0, 1]);
    let mask = TemporalMask::from_tats(&tats);
    let (h, active) = embed_tokens(&tats, &mask, &params, &cfg).unwrap();
    let out = forward(&tats, &mask, &params, &cfg).unwrap();
    let get = |n: &str| params.get(n).unwrap().data.clone();
    let d = cfg.dim;
    for (r, &on) in active.iter().enumerate() {
        if !on {
            continue;
        }
        let x = &h[r * d..(r + 1) * d];
        let u = layer_norm(x, &get("blocks.0.mlp.norm.gamma"), &get("blocks.0.mlp.norm.beta"));
        let hidden: Vec<f64> = affine(&get("blocks.0.mlp.w1"), &get("blocks.0.mlp.b1"), &u)
            .into_iter()
            .map(|v| 0.5 * v * (1.0 + (0.797_884_560_802_865_4 * (v + 0.044715 * v * v * v)).tanh()))
            .collect();
        let m = affine(&get("blocks.0.mlp.w2"), &get("blocks.0.mlp.b2"), &hidden);
        let y: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a + b).collect();
        let z = layer_norm(&y, &get("final_norm.gamma"), &get("final_norm.beta"));
        for j in 0..d {
            assert!((z[j] - out.full_sequence[r * d + j]).abs() < 1e-10, "row {r}");
        }
    }
}
