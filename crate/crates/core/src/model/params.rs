//! Named parameter tensors in a fixed enumeration order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Param<F> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param {
            name,
            shape,
            data: vec![F::zero(); n],
        }
    }
}

/// Parameter slots inside one transformer block, in enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AttnSlots {
    pub norm_g: usize,
    pub norm_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockSlots {
    pub temporal: AttnSlots,
    pub spatial: AttnSlots,
    pub norm_g: usize,
    pub norm_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

pub(crate) const TOKEN_W: usize = 0;
pub(crate) const TOKEN_B: usize = 1;
pub(crate) const COORD_W: usize = 2;
pub(crate) const TEMPORAL_POS: usize = 3;
pub(crate) const CLS: usize = 4;
const PREAMBLE: usize = 5;
const PER_BLOCK: usize = 26;

pub(crate) fn block_slots(block: usize) -> BlockSlots {
    let base = PREAMBLE + block * PER_BLOCK;
    let attn = |o: usize| AttnSlots {
        norm_g: o,
        norm_b: o + 1,
        wq: o + 2,
        bq: o + 3,
        wk: o + 4,
        bk: o + 5,
        wv: o + 6,
        bv: o + 7,
        wo: o + 8,
        bo: o + 9,
    };
    BlockSlots {
        temporal: attn(base),
        spatial: attn(base + 10),
        norm_g: base + 20,
        norm_b: base + 21,
        w1: base + 22,
        b1: base + 23,
        w2: base + 24,
        b2: base + 25,
    }
}

pub(crate) struct TailSlots {
    pub norm_g: usize,
    pub norm_b: usize,
    pub head_w: usize,
    pub head_b: usize,
}

pub(crate) fn tail_slots(depth: usize) -> TailSlots {
    let base = PREAMBLE + depth * PER_BLOCK;
    TailSlots {
        norm_g: base,
        norm_b: base + 1,
        head_w: base + 2,
        head_b: base + 3,
    }
}

/// Every trainable tensor of the space-time transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<F> {
    pub params: Vec<Param<F>>,
}

/// Names and shapes in enumeration order.
pub fn parameter_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.dim;
    let hidden = cfg.hidden_dim();
    let mut out = vec![
        ("token_proj.weight".to_string(), vec![d, cfg.input_dim]),
        ("token_proj.bias".to_string(), vec![d]),
        ("coord_proj.weight".to_string(), vec![d, 2]),
        ("temporal_pos".to_string(), vec![cfg.max_frames, d]),
        ("cls_token".to_string(), vec![d]),
    ];
    for b in 0..cfg.depth {
        for kind in ["temporal", "spatial"] {
            let p = format!("blocks.{b}.{kind}");
            out.push((format!("{p}.norm.gamma"), vec![d]));
            out.push((format!("{p}.norm.beta"), vec![d]));
            for m in ["q", "k", "v", "o"] {
                out.push((format!("{p}.w{m}"), vec![d, d]));
                out.push((format!("{p}.b{m}"), vec![d]));
            }
        }
        let p = format!("blocks.{b}.mlp");
        out.push((format!("{p}.norm.gamma"), vec![d]));
        out.push((format!("{p}.norm.beta"), vec![d]));
        out.push((format!("{p}.w1"), vec![hidden, d]));
        out.push((format!("{p}.b1"), vec![hidden]));
        out.push((format!("{p}.w2"), vec![d, hidden]));
        out.push((format!("{p}.b2"), vec![d]));
    }
    out.push(("final_norm.gamma".to_string(), vec![d]));
    out.push(("final_norm.beta".to_string(), vec![d]));
    out.push(("head.weight".to_string(), vec![cfg.num_base_classes, d]));
    out.push(("head.bias".to_string(), vec![cfg.num_base_classes]));
    out
}

impl<F: Real> ParameterSet<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ParameterSet {
            params: parameter_layout(cfg)
                .into_iter()
                .map(|(n, s)| Param::zeros(n, s))
                .collect(),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for matrices, small uniform for the
    /// positional table and CLS token, identity for norms, zero biases.
    /// Draws happen in 64-bit so both precisions start from the same values.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(cfg.seed));
        let mut set = Self::zeros(cfg);
        for p in set.params.iter_mut() {
            let name = p.name.as_str();
            if name.ends_with("gamma") {
                p.data.iter_mut().for_each(|v| *v = F::one());
            } else if p.shape.len() == 2 && name != "temporal_pos" {
                let bound = 1.0 / (p.shape[1] as f64).sqrt();
                p.data
                    .iter_mut()
                    .for_each(|v| *v = F::of(rng.random_range(-bound..bound)));
            } else if name == "temporal_pos" || name == "cls_token" {
                p.data
                    .iter_mut()
                    .for_each(|v| *v = F::of(rng.random_range(-0.5..0.5)));
            }
        }
        set
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: vec![F::zero(); p.data.len()],
                })
                .collect(),
        }
    }

    pub fn cast<G: Real>(&self) -> ParameterSet<G> {
        ParameterSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| G::of(v.f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Param<F>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: F, other: &ParameterSet<F>) {
        for (p, o) in self.params.iter_mut().zip(&other.params) {
            for (a, b) in p.data.iter_mut().zip(&o.data) {
                *a += alpha * *b;
            }
        }
    }

    pub fn scale(&mut self, alpha: F) {
        for p in self.params.iter_mut() {
            p.data.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn norm(&self) -> F {
        self.params
            .iter()
            .flat_map(|p| p.data.iter())
            .map(|v| *v * *v)
            .sum::<F>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn data(&self, slot: usize) -> &[F] {
        &self.params[slot].data
    }

    pub(crate) fn data_mut(&mut self, slot: usize) -> &mut [F] {
        &mut self.params[slot].data
    }
}
