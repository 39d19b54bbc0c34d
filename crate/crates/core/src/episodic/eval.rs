use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::split_tokens;
use super::{sample_episode, DatasetManifest, Episode, PipelineConfig, Split, VideoSource};
use crate::error::{Result, TatError};
use crate::matching::{classify_query, FrameSequence};
use crate::model::{forward, Checkpoint, TemporalMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_way: usize,
    pub k_shot: usize,
    /// Queries per episode, spread over the classes.
    pub n_query: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_way: 5,
            k_shot: 1,
            n_query: 5,
            episodes: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_way: usize,
    pub k_shot: usize,
    pub episodes: usize,
    /// Mean of the per-episode accuracies.
    pub accuracy: f64,
    /// Half-width of the normal-approximation 95% interval over episodes.
    pub ci95: f64,
    pub seed: u64,
}

/// Runs `classify` on sampled novel episodes. It returns one predicted
/// label per query.
pub fn evaluate_with(
    manifest: &DatasetManifest,
    cfg: &EvalConfig,
    mut classify: impl FnMut(&Episode) -> Result<Vec<usize>>,
) -> Result<EvalResult> {
    if cfg.episodes == 0 {
        return Err(TatError::Argument("evaluation needs at least one episode".into()));
    }
    manifest.validate_for(Split::Novel, cfg.k_shot)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut accs = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        let ep = sample_episode(manifest, Split::Novel, cfg.n_way, cfg.k_shot, cfg.n_query, &mut rng)?;
        let preds = classify(&ep)?;
        if preds.len() != ep.query.len() {
            return Err(TatError::Argument(format!(
                "classifier returned {} predictions for {} queries",
                preds.len(),
                ep.query.len()
            )));
        }
        let correct = preds.iter().zip(&ep.query).filter(|(p, q)| **p == q.1).count();
        accs.push(correct as f64 / ep.query.len().max(1) as f64);
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = if accs.len() > 1 {
        accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(EvalResult {
        n_way: cfg.n_way,
        k_shot: cfg.k_shot,
        episodes: cfg.episodes,
        accuracy: mean,
        ci95: 1.96 * (var / n).sqrt(),
        seed: cfg.seed,
    })
}

/// Frame embeddings of every video in `split`, indexed like the manifest.
pub fn embed_videos(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
    source: &dyn VideoSource,
    pipeline: &PipelineConfig,
) -> Result<Vec<Option<FrameSequence<f64>>>> {
    let tokens = split_tokens(manifest, split, source, pipeline)?;
    let params = checkpoint.params.cast::<f64>();
    tokens
        .par_iter()
        .map(|t| {
            let Some(t) = t else { return Ok(None) };
            let out = forward(t, &TemporalMask::from_tats(t), &params, &checkpoint.config)?;
            FrameSequence::new(out.num_frames, out.dim, out.frame_embedding).map(Some)
        })
        .collect()
}

/// Few-shot accuracy of a trained model on the novel split.
pub fn evaluate(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    source: &dyn VideoSource,
    pipeline: &PipelineConfig,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    let base = manifest.classes(Split::Base).len();
    if base != checkpoint.config.num_base_classes {
        return Err(TatError::Data(format!(
            "checkpoint has {} base classes, manifest has {base}",
            checkpoint.config.num_base_classes
        )));
    }
    manifest.validate_for(Split::Novel, cfg.k_shot)?;
    let seqs = embed_videos(checkpoint, manifest, Split::Novel, source, pipeline)?;
    evaluate_with(manifest, cfg, |ep| {
        let supports: Vec<(&FrameSequence<f64>, usize)> = ep
            .support
            .iter()
            .map(|&(v, label)| (seqs[v].as_ref().expect("novel video"), label))
            .collect();
        ep.query
            .iter()
            .map(|&(v, _)| {
                classify_query(seqs[v].as_ref().expect("novel video"), &supports, ep.n_way()).map(|l| l.argmax())
            })
            .collect()
    })
}
