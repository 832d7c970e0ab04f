//! Mini-batch training on mean CTC loss.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ctc::ctc_loss;
use super::decode::{best_path, collapse};
use super::features::FeatureMatrix;
use super::model::AcousticModel;
use crate::error::{Error, Result};
use crate::optim::OptimizerParams;
use crate::{registry, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: String,
    pub learning_rate: f64,
    /// Momentum (first-moment decay).
    pub momentum: f64,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    /// Rescale batch gradients whose L2 norm exceeds this.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            optimizer: "adam".into(),
            learning_rate: 3e-3,
            momentum: 0.9,
            batch_size: 16,
            holdout_fraction: 0.1,
            clip_norm: 10.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub features: FeatureMatrix,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_examples: usize,
    pub heldout_examples: usize,
    pub epoch_loss: Vec<f64>,
    pub heldout_accuracy: f64,
}

/// Deterministic train / held-out split of `n` items.
pub fn split(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[u64::MAX]));
    let held = ((n as f64) * holdout_fraction).round() as usize;
    let held = held.min(n.saturating_sub(1));
    let heldout = idx.split_off(n - held);
    (idx, heldout)
}

/// Fraction of `examples` whose greedy transcription matches exactly.
pub fn exact_match_accuracy(model: &AcousticModel, examples: &[&Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let hits: Vec<bool> = examples
        .par_iter()
        .map(|e| Ok(collapse(&best_path(&model.forward(&e.features)?)) == e.target))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / examples.len() as f64)
}

fn example_gradient(model: &AcousticModel, e: &Example) -> Result<(f64, Vec<f64>)> {
    let (logits, tape) = model.forward_tape(&e.features)?;
    let (loss, grad) = ctc_loss(&logits, &e.target)?;
    Ok((loss, model.backward(&tape, &grad)?.params))
}

pub fn train(model: &mut AcousticModel, examples: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let (train_idx, held_idx) = split(examples.len(), cfg.holdout_fraction, cfg.seed);
    let n = model.params().len();
    let frozen = model.dims().frozen_prefix();
    let params = OptimizerParams {
        learning_rate: cfg.learning_rate,
        beta1: cfg.momentum,
        ..OptimizerParams::default()
    };
    let mut opt = registry::make_optimizer(&cfg.optimizer, &params, n)?;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng::stream(cfg.seed, &[epoch as u64]));
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| example_gradient(model, &examples[i]).map_err(|e| e.context(format!("example {i}"))))
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; n];
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            grad[..frozen].fill(0.0);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "epoch {epoch}, batch {b}: loss {loss}, examples {batch:?}"
                )));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            opt.step(model.params_mut(), &grad);
            total += loss;
        }
        epoch_loss.push(total / train_idx.len() as f64);
    }

    let held: Vec<&Example> = held_idx.iter().map(|&i| &examples[i]).collect();
    Ok(TrainReport {
        epochs: cfg.epochs,
        train_examples: train_idx.len(),
        heldout_examples: held.len(),
        epoch_loss,
        heldout_accuracy: exact_match_accuracy(model, &held)?,
    })
}
