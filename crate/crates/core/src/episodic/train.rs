use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_tokens, cls_loss, metric_loss, sample_episode, DatasetManifest, LossConfig, PipelineConfig, Split, VideoSource};
use crate::error::{Result, TatError};
use crate::features::TatTensor;
use crate::matching::{bi_mhm_with_grad, FrameSequence};
use crate::model::{backward_with_cache, forward_with_cache, Checkpoint, ModelConfig, ParameterSet, TemporalMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub loss: LossConfig,
    pub n_way: usize,
    pub k_shot: usize,
    /// Queries per episode, spread over the classes.
    pub n_query: usize,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub learning_rate: f64,
    /// Rescales the gradient when its norm exceeds this. Off by default.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            pipeline: PipelineConfig::default(),
            loss: LossConfig::default(),
            n_way: 5,
            k_shot: 1,
            n_query: 5,
            epochs: 10,
            episodes_per_epoch: 100,
            learning_rate: 0.03,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for r in [self.model.validate(), self.loss.validate(), self.pipeline.validate()] {
            match r {
                Err(TatError::Config(m)) => problems.push(m),
                Err(e) => problems.push(e.to_string()),
                Ok(()) => {}
            }
        }
        if let Some(t) = self.pipeline.frames {
            if t < 2 || t > self.model.max_frames {
                problems.push(format!("frames must be in [2, {}] for motion, got {t}", self.model.max_frames));
            }
        }
        if !problems.is_empty() {
            return Err(TatError::Config(problems.join("; ")));
        }
        if self.n_way == 0 || self.k_shot == 0 || self.n_query == 0 {
            return Err(TatError::Config("n_way, k_shot and n_query must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TatError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(TatError::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn total_episodes(&self) -> usize {
        self.epochs * self.episodes_per_epoch
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub episode: usize,
    pub cls_loss: f64,
    pub metric_loss: f64,
    pub total: f64,
}

/// Builds tokens for every entry of `split`, indexed like the manifest.
pub(crate) fn split_tokens(
    manifest: &DatasetManifest,
    split: Split,
    source: &dyn VideoSource,
    pipeline: &PipelineConfig,
) -> Result<Vec<Option<TatTensor>>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            if e.split != split {
                return Ok(None);
            }
            let (tracks, grid) = source.load(&e.video_id)?;
            build_tokens(&tracks, &grid, pipeline).map(Some)
        })
        .collect()
}

/// Position of each base class id in the sorted base class list.
pub(crate) fn base_labels(manifest: &DatasetManifest) -> std::collections::BTreeMap<usize, usize> {
    manifest.classes(Split::Base).into_iter().enumerate().map(|(i, c)| (c, i)).collect()
}

struct Step {
    cls: f64,
    metric: f64,
    grads: ParameterSet<f32>,
}

fn episode_step(
    cfg: &TrainConfig,
    params: &ParameterSet<f32>,
    videos: &[(&TatTensor, usize)],
    base_label: &[usize],
    support_count: usize,
    n_way: usize,
) -> Result<Step> {
    let model = &cfg.model;
    let passes = videos
        .par_iter()
        .map(|(tats, _)| forward_with_cache(tats, &TemporalMask::from_tats(tats), params, model))
        .collect::<Result<Vec<_>>>()?;
    let seqs: Vec<FrameSequence<f64>> = passes
        .iter()
        .map(|(out, _)| FrameSequence::new(out.num_frames, out.dim, out.frame_embedding.iter().map(|&v| f64::from(v)).collect()))
        .collect::<Result<_>>()?;

    let nv = videos.len();
    let mut g_frames: Vec<Vec<f64>> = seqs.iter().map(|s| vec![0.0; s.data.len()]).collect();
    let mut g_logits: Vec<Vec<f64>> = vec![vec![0.0; model.num_base_classes]; nv];

    let mut cls = 0.0;
    for (v, (out, _)) in passes.iter().enumerate() {
        let logits: Vec<f64> = out.cls_logits.iter().map(|&l| f64::from(l)).collect();
        let (l, g) = cls_loss(&logits, base_label[v])?;
        cls += l / nv as f64;
        for (dst, gv) in g_logits[v].iter_mut().zip(g) {
            *dst += cfg.loss.lambda_ce * gv / nv as f64;
        }
    }

    let queries = nv - support_count;
    let mut metric = 0.0;
    let mut shots = vec![0usize; n_way];
    for &(_, label) in &videos[..support_count] {
        shots[label] += 1;
    }
    for q in support_count..nv {
        let mut dist = vec![0.0; n_way];
        let mut pair_grads = Vec::with_capacity(support_count);
        for s in 0..support_count {
            let c = videos[s].1;
            let (d, gq, gs) = bi_mhm_with_grad(&seqs[q], &seqs[s])?;
            dist[c] += d / shots[c] as f64;
            pair_grads.push((s, c, gq, gs));
        }
        let (l, gd) = metric_loss(&dist, videos[q].1, cfg.loss.temperature)?;
        metric += l / queries as f64;
        for (s, c, gq, gs) in pair_grads {
            let w = cfg.loss.lambda_metric * gd[c] / (shots[c] as f64 * queries as f64);
            for (dst, g) in g_frames[q].iter_mut().zip(&gq) {
                *dst += w * g;
            }
            for (dst, g) in g_frames[s].iter_mut().zip(&gs) {
                *dst += w * g;
            }
        }
    }

    let grads = passes
        .par_iter()
        .enumerate()
        .map(|(v, (_, cache))| {
            let gf: Vec<f32> = g_frames[v].iter().map(|&g| g as f32).collect();
            let gl: Vec<f32> = g_logits[v].iter().map(|&g| g as f32).collect();
            backward_with_cache(cache, params, model, &gf, &gl).map(|(g, _)| g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = params.zeros_like();
    for g in &grads {
        total.axpy(1.0, g);
    }
    Ok(Step { cls, metric, grads: total })
}

/// Episodic training on the base split with plain SGD. `on_record` sees the
/// loss of every episode as it completes. With zero episodes the initial
/// checkpoint is returned unchanged.
pub fn train(
    cfg: &TrainConfig,
    manifest: &DatasetManifest,
    source: &dyn VideoSource,
    init: Option<Checkpoint>,
    on_record: &mut dyn FnMut(&LossRecord) -> Result<()>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let labels = base_labels(manifest);
    if labels.len() != cfg.model.num_base_classes {
        return Err(TatError::Data(format!(
            "manifest has {} base classes, model expects {}",
            labels.len(),
            cfg.model.num_base_classes
        )));
    }
    let mut ckpt = match init {
        Some(c) => {
            if c.config != cfg.model {
                return Err(TatError::Config("initial checkpoint does not match the model config".into()));
            }
            c
        }
        None => Checkpoint::init(cfg.model)?,
    };
    if cfg.total_episodes() == 0 {
        return Ok(ckpt);
    }
    manifest.validate_for(Split::Base, cfg.k_shot)?;
    let tokens = split_tokens(manifest, Split::Base, source, &cfg.pipeline)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for episode in 0..cfg.total_episodes() {
        let ep = sample_episode(manifest, Split::Base, cfg.n_way, cfg.k_shot, cfg.n_query, &mut rng)?;
        let videos: Vec<(&TatTensor, usize)> = ep
            .videos()
            .map(|(v, label)| (tokens[v].as_ref().expect("base video"), label))
            .collect();
        let base_label: Vec<usize> = ep.videos().map(|(v, _)| labels[&manifest.entries[v].class_id]).collect();
        let step = episode_step(cfg, &ckpt.params, &videos, &base_label, ep.support.len(), ep.n_way())?;
        let mut grads = step.grads;
        if !grads.is_finite() {
            return Err(TatError::Numeric {
                block: 0,
                message: format!("non-finite gradient at episode {episode}"),
            });
        }
        if let Some(clip) = cfg.grad_clip {
            let norm = f64::from(grads.norm());
            if norm > clip {
                grads.scale((clip / norm) as f32);
            }
        }
        ckpt.params.axpy(-cfg.learning_rate as f32, &grads);
        let record = LossRecord {
            episode,
            cls_loss: step.cls,
            metric_loss: step.metric,
            total: cfg.loss.lambda_ce * step.cls + cfg.loss.lambda_metric * step.metric,
        };
        if !record.total.is_finite() {
            return Err(TatError::Numeric {
                block: 0,
                message: format!("non-finite loss at episode {episode}"),
            });
        }
        on_record(&record)?;
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SyntheticSource;
    use crate::BenchmarkSpec;

    /// One fixed base episode of the default benchmark: 5 supports and 5
    /// queries, one each per class.
    fn fixed_episode(points: usize) -> (TrainConfig, Vec<TatTensor>, Vec<usize>) {
        let spec = BenchmarkSpec::default();
        let source = SyntheticSource::new(spec.clone()).unwrap();
        let mut cfg = TrainConfig::default();
        cfg.pipeline.point_limit = points;
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        for index in 0..2 {
            for class in 0..spec.base.len() {
                let (tracks, grid) = source.load(&crate::synth::video_id(class, index)).unwrap();
                tokens.push(build_tokens(&tracks, &grid, &cfg.pipeline).unwrap());
                labels.push(class);
            }
        }
        (cfg, tokens, labels)
    }

    fn step(cfg: &TrainConfig, params: &ParameterSet<f32>, tokens: &[TatTensor], labels: &[usize]) -> Step {
        let videos: Vec<(&TatTensor, usize)> = tokens.iter().zip(labels).map(|(t, &l)| (t, l)).collect();
        episode_step(cfg, params, &videos, labels, 5, 5).unwrap()
    }

    fn max_diff(a: &ParameterSet<f32>, b: &ParameterSet<f32>) -> f32 {
        a.params
            .iter()
            .zip(&b.params)
            .flat_map(|(p, q)| p.data.iter().zip(&q.data).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f32::max)
    }

    #[test]
    fn loss_weights_split_the_gradient() {
        let (mut cfg, tokens, labels) = fixed_episode(32);
        let params = ParameterSet::init(&cfg.model);

        cfg.loss.lambda_metric = 0.0;
        let cls_only = step(&cfg, &params, &tokens, &labels).grads;
        // cross-entropy alone, assembled from the public forward and backward
        let mut manual = params.zeros_like();
        for (tats, &label) in tokens.iter().zip(&labels) {
            let (out, cache) = forward_with_cache(tats, &TemporalMask::from_tats(tats), &params, &cfg.model).unwrap();
            let logits: Vec<f64> = out.cls_logits.iter().map(|&v| f64::from(v)).collect();
            let (_, g) = cls_loss(&logits, label).unwrap();
            let gl: Vec<f32> = g.iter().map(|&v| (v / tokens.len() as f64) as f32).collect();
            let gf = vec![0.0f32; out.frame_embedding.len()];
            manual.axpy(1.0, &backward_with_cache(&cache, &params, &cfg.model, &gf, &gl).unwrap().0);
        }
        assert!(max_diff(&cls_only, &manual) < 1e-6);

        cfg.loss = LossConfig { lambda_ce: 0.0, lambda_metric: 1.0, ..LossConfig::default() };
        let metric_only = step(&cfg, &params, &tokens, &labels).grads;
        cfg.loss = LossConfig::default();
        let both = step(&cfg, &params, &tokens, &labels).grads;
        let mut sum = cls_only.clone();
        sum.axpy(1.0, &metric_only);
        assert!(max_diff(&both, &sum) < 1e-5);
        assert!(max_diff(&metric_only, &params.zeros_like()) > 1e-4);
    }

    #[test]
    fn single_episode_overfits() {
        // few points keep the fit within 200 steps at the default rate
        let (cfg, tokens, labels) = fixed_episode(16);
        let mut params = ParameterSet::init(&cfg.model);
        let mut totals = Vec::new();
        for _ in 0..200 {
            let s = step(&cfg, &params, &tokens, &labels);
            totals.push(s.cls + s.metric);
            params.axpy(-cfg.learning_rate as f32, &s.grads);
        }
        let window = |k: usize| totals[k * 10..(k + 1) * 10].iter().sum::<f64>() / 10.0;
        let smoothed: Vec<f64> = (0..20).map(window).collect();
        assert!(smoothed.windows(2).all(|w| w[1] <= w[0]), "{smoothed:?}");
        assert!(totals[199] < 0.05, "final loss {}", totals[199]);
    }
}
