//! Supervised training with Adam over mini-batches of patches.

mod adam;
mod report;

use std::time::Instant;

use rand::seq::SliceRandom;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use report::TrainReport;

use crate::autodiff::Tensor;
use crate::data::{augment_sample, sample_at, AugmentOptions, Coord, DataError, HsiCube, LabelRaster, Sample, SplitSpec};
use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::model::{argmax_class, loss_and_gradients, predict, ModelConfig, ModelError, ModelParams};
use crate::rng::{stream_rng, STREAM_EPOCH};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("gradient for `{name}` has shape {found:?}, parameter has {expected:?}")]
    GradShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("non-finite training loss at epoch {0}")]
    NonFiniteLoss(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            patience: 20,
            min_delta: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Seeds parameter init and the per-epoch shuffles.
    pub seed: u64,
    /// Expand the training list 6× with rotations and flips before epoch 1.
    pub augment: bool,
    pub augment_options: AugmentOptions,
    /// Log a progress line every this many epochs; 0 disables logging.
    pub log_interval: usize,
    pub early_stopping: Option<EarlyStopping>,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 5e-4,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            augment: true,
            augment_options: AugmentOptions::default(),
            log_interval: 0,
            early_stopping: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `−ln p[label]` for a probability vector; `label` is 1-based.
pub fn cross_entropy(probabilities: &Tensor, label: u16) -> Result<f64, TrainError> {
    let k = probabilities.len();
    if label == 0 || label as usize > k {
        return Err(TrainError::Contract(format!("label {label} outside 1..={k}")));
    }
    Ok(-probabilities.data()[label as usize - 1].ln())
}

/// Cross-entropy from logits through log-sum-exp; `label` is 1-based.
pub fn cross_entropy_logits(logits: &[f64], label: u16) -> Result<f64, TrainError> {
    let k = logits.len();
    if label == 0 || label as usize > k {
        return Err(TrainError::Contract(format!("label {label} outside 1..={k}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label as usize - 1])
}

/// Extracts the labeled patches at `coords`.
pub fn collect_samples(
    cube: &HsiCube,
    labels: &LabelRaster,
    coords: &[(Coord, u16)],
    patch: usize,
) -> Result<Vec<Sample>, TrainError> {
    coords
        .iter()
        .map(|&(c, _)| sample_at(cube, labels, c, patch).map_err(TrainError::from))
        .collect()
}

/// Shuffled visiting order for one epoch, seeded by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_EPOCH ^ epoch as u64));
    order
}

fn check_inputs(cube: &HsiCube, labels: &LabelRaster, model: &ModelConfig) -> Result<(), TrainError> {
    model.validate()?;
    labels.ensure_matches(cube)?;
    if cube.bands() != model.bands {
        return Err(ModelError::BandMismatch {
            model: model.bands,
            data: cube.bands(),
        }
        .into());
    }
    if labels.num_classes() > model.classes {
        return Err(TrainError::Config(format!(
            "labels use {} classes but the model has {}",
            labels.num_classes(),
            model.classes
        )));
    }
    Ok(())
}

/// Trains from scratch on explicit samples. The sample list is used as is,
/// no augmentation is applied here.
pub fn train_on_samples(
    samples: &[Sample],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    model.validate()?;
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::Config("training split is empty".into()));
    }
    let started = Instant::now();
    let mut params = ModelParams::init(model, cfg.seed)?;
    let mut adam = AdamState::for_params(&params);
    let mut report = TrainReport::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        let order = epoch_order(samples.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            for &i in batch {
                let s = &samples[i];
                let bp = loss_and_gradients(s, &params, model)?;
                loss_sum += bp.loss;
                if argmax_class(bp.logits.data()) == s.label {
                    correct += 1;
                }
                for (acc, g) in grads.iter_mut().zip(&bp.grads) {
                    acc.add_assign(g);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            adam_step(&mut params, &grads, &mut adam, cfg)?;
        }
        let mean_loss = loss_sum / samples.len() as f64;
        if !mean_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch + 1));
        }
        let train_oa = correct as f64 / samples.len() as f64;
        report.epoch_loss.push(mean_loss);
        report.epoch_train_oa.push(train_oa);
        if cfg.log_interval > 0 && (epoch + 1) % cfg.log_interval == 0 {
            log::info!("epoch {:>4}  loss {:.6}  train OA {:.4}", epoch + 1, mean_loss, train_oa);
        }
        if let Some(es) = cfg.early_stopping {
            if mean_loss < best - es.min_delta {
                best = mean_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    report.train_seconds = started.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Full protocol: patches for the training split, optional 6× augmentation,
/// training, then a confusion matrix over the test split.
pub fn train(
    cube: &HsiCube,
    labels: &LabelRaster,
    split: &SplitSpec,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    check_inputs(cube, labels, model)?;
    cfg.validate()?;
    let base = collect_samples(cube, labels, &split.train_coords(), model.patch)?;
    if base.is_empty() {
        return Err(TrainError::Config("training split is empty".into()));
    }
    let samples: Vec<Sample> = if cfg.augment {
        base.iter().flat_map(|s| augment_sample(s, cfg.augment_options)).collect()
    } else {
        base
    };
    let (params, mut report) = train_on_samples(&samples, model, cfg)?;

    let test = split.test_coords();
    if !test.is_empty() {
        let started = Instant::now();
        report.test_confusion = Some(evaluate(&params, model, cube, labels, &test)?);
        report.test_seconds = started.elapsed().as_secs_f64();
    }
    Ok((params, report))
}

/// Predicts every coordinate and tallies `[truth][prediction]`.
pub fn evaluate(
    params: &ModelParams,
    model: &ModelConfig,
    cube: &HsiCube,
    labels: &LabelRaster,
    coords: &[(Coord, u16)],
) -> Result<ConfusionMatrix, TrainError> {
    check_inputs(cube, labels, model)?;
    let mut cm = ConfusionMatrix::new(model.classes)?;
    for &(coord, truth) in coords {
        if truth == 0 || labels.get(coord.0, coord.1) != truth {
            return Err(TrainError::Contract(format!(
                "coordinate ({}, {}) is not labeled {truth}",
                coord.0, coord.1
            )));
        }
        let sample = sample_at(cube, labels, coord, model.patch)?;
        let pred = predict(&sample.patch, params, model)?;
        cm.record(truth, pred)?;
    }
    Ok(cm)
}

/// Confusion matrix of `params` on explicit samples.
pub fn evaluate_samples(params: &ModelParams, model: &ModelConfig, samples: &[Sample]) -> Result<ConfusionMatrix, TrainError> {
    let mut cm = ConfusionMatrix::new(model.classes)?;
    for s in samples {
        cm.record(s.label, predict(&s.patch, params, model)?)?;
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        let one_hot = Tensor::vector(vec![0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&one_hot, 2).unwrap(), 0.0);
        let uniform = Tensor::vector(vec![0.25; 4]);
        assert!((cross_entropy(&uniform, 3).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((cross_entropy_logits(&[0.0, 3f64.ln()], 1).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(cross_entropy(&uniform, 0).is_err());
        assert!(cross_entropy_logits(&[0.0, 1.0], 3).is_err());
    }

    #[test]
    fn epoch_orders_are_permutations() {
        let a = epoch_order(50, 1, 0);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(50, 1, 0));
        assert_ne!(a, epoch_order(50, 1, 1));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c.batch_size = 1;
        c.epochs = 0;
        assert!(c.validate().is_err());
    }
}
