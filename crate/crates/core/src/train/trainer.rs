use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{macro_f1, F1Report, MetricMode};
use super::optim::{clip_grad_norm, AdamW, AdamWConfig};
use super::{LabelSet, TrainError};
use crate::kernel::{backward, forward, KernelConfig, ModelParams, PreparedGraph};

/// An example whose graph is embedded, augmented and ready for the model.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub text: String,
    pub target: String,
    pub label: usize,
    pub prepared: PreparedGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving validations before stopping; `None`
    /// disables early stopping.
    pub patience: Option<usize>,
    /// Fraction of an epoch between validations.
    pub val_interval: f64,
    pub trials: usize,
    pub optimizer: AdamWConfig,
    /// Global gradient-norm cap; off by default.
    pub grad_clip: Option<f64>,
    pub metric_mode: MetricMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 20,
            patience: Some(10),
            val_interval: 0.2,
            trials: 3,
            optimizer: AdamWConfig::default(),
            grad_clip: None,
            metric_mode: MetricMode::AllClasses,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.trials == 0 {
            return Err(TrainError::InvalidConfig("batch_size, max_epochs and trials must be positive".into()));
        }
        if !(self.val_interval > 0.0 && self.val_interval <= 1.0) {
            return Err(TrainError::InvalidConfig(format!("val_interval {} outside (0, 1]", self.val_interval)));
        }
        if self.patience == Some(0) {
            return Err(TrainError::InvalidConfig("patience must be positive".into()));
        }
        if self.optimizer.lr <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub step: usize,
    pub epoch: usize,
    pub dev_loss: f64,
    pub dev_f1: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss of the forward passes made during the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub steps_per_epoch: usize,
    pub validation_every: usize,
    pub total_steps: usize,
    pub epochs: Vec<EpochRecord>,
    pub validations: Vec<ValidationRecord>,
    pub best_step: Option<usize>,
    pub best_dev_loss: Option<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the lowest validation loss (the last ones when there
    /// is no dev set).
    pub best: ModelParams,
    pub last: ModelParams,
    pub log: TrainLog,
}

struct Pass {
    loss: f64,
    correct: bool,
    grad: ModelParams,
}

fn example_pass(ex: &PreparedExample, kernel: &KernelConfig, params: &ModelParams) -> Result<Pass, TrainError> {
    let trace = forward(&ex.prepared, kernel, params)?;
    let correct = trace.predicted() == ex.label;
    let (loss, grad) = backward(&ex.prepared, kernel, params, &trace, ex.label)?;
    Ok(Pass { loss, correct, grad })
}

/// Mean loss and macro-F1 over a set, without gradients.
pub fn score_set(
    examples: &[PreparedExample],
    kernel: &KernelConfig,
    params: &ModelParams,
    labels: LabelSet,
    mode: MetricMode,
) -> Result<(f64, F1Report), TrainError> {
    let results = examples
        .par_iter()
        .map(|ex| forward(&ex.prepared, kernel, params).map(|t| (t.loss(ex.label), t.predicted())))
        .collect::<Result<Vec<_>, _>>()?;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / examples.len().max(1) as f64;
    let preds: Vec<usize> = results.iter().map(|r| r.1).collect();
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    Ok((loss, macro_f1(&preds, &golds, labels, mode)?))
}

/// Mini-batch AdamW on cross-entropy with periodic validation and early
/// stopping.
///
/// Examples in a batch are processed in parallel; their gradients are summed
/// in batch order, so results do not depend on the thread count.
pub fn train(
    train_set: &[PreparedExample],
    dev_set: &[PreparedExample],
    kernel: &KernelConfig,
    init: ModelParams,
    config: &TrainConfig,
    labels: LabelSet,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let mut params = init;
    let mut opt = AdamW::new(config.optimizer, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps_per_epoch = train_set.len().div_ceil(config.batch_size);
    let validation_every = ((config.val_interval * steps_per_epoch as f64).ceil() as usize).max(1);
    let mut log = TrainLog {
        seed,
        steps_per_epoch,
        validation_every,
        total_steps: 0,
        epochs: Vec::new(),
        validations: Vec::new(),
        best_step: None,
        best_dev_loss: None,
        stopped_early: false,
    };
    let mut best = params.clone();
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let passes = batch
                .par_iter()
                .map(|&i| example_pass(&train_set[i], kernel, &params))
                .collect::<Result<Vec<_>, _>>()?;
            let mut grad = params.zeros_like();
            let mut batch_loss = 0.0;
            for p in &passes {
                grad.add_scaled(&p.grad, 1.0 / batch.len() as f64);
                batch_loss += p.loss;
                epoch_correct += p.correct as usize;
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { batch: log.total_steps });
            }
            epoch_loss += batch_loss;
            if let Some(max) = config.grad_clip {
                clip_grad_norm(&mut grad, max);
            }
            opt.step(&mut params, &grad);
            if !params.is_finite() {
                return Err(TrainError::NonFiniteLoss { batch: log.total_steps });
            }
            log.total_steps += 1;

            if !dev_set.is_empty() && log.total_steps % validation_every == 0 {
                let (dev_loss, f1) = score_set(dev_set, kernel, &params, labels, config.metric_mode)?;
                let improved = log.best_dev_loss.map_or(true, |b| dev_loss < b);
                if improved {
                    best = params.clone();
                    log.best_dev_loss = Some(dev_loss);
                    log.best_step = Some(log.total_steps);
                    stale = 0;
                } else {
                    stale += 1;
                }
                log.validations.push(ValidationRecord {
                    step: log.total_steps,
                    epoch,
                    dev_loss,
                    dev_f1: f1.f_avg,
                    improved,
                });
                if config.patience.is_some_and(|p| stale >= p) {
                    log.stopped_early = true;
                    log.epochs.push(EpochRecord {
                        epoch,
                        train_loss: epoch_loss / train_set.len() as f64,
                        train_accuracy: epoch_correct as f64 / train_set.len() as f64,
                    });
                    break 'epochs;
                }
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            train_accuracy: epoch_correct as f64 / train_set.len() as f64,
        });
    }
    if dev_set.is_empty() {
        best = params.clone();
    }
    Ok(TrainOutcome { best, last: params, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub text: String,
    pub target: String,
    pub gold: String,
    pub pred: String,
    pub probabilities: Vec<f64>,
    /// Selected filter indices per layer and node.
    pub selected_filters: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub favor_against: F1Report,
    pub all_classes: F1Report,
    /// Scores per target in the requested mode.
    pub per_target: BTreeMap<String, F1Report>,
    pub mean_loss: f64,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn report(&self, mode: MetricMode) -> &F1Report {
        match mode {
            MetricMode::FavorAgainstOnly => &self.favor_against,
            MetricMode::AllClasses => &self.all_classes,
        }
    }
}

pub fn evaluate(
    examples: &[PreparedExample],
    kernel: &KernelConfig,
    params: &ModelParams,
    labels: LabelSet,
    mode: MetricMode,
) -> Result<EvalReport, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let traces = examples
        .par_iter()
        .map(|ex| forward(&ex.prepared, kernel, params))
        .collect::<Result<Vec<_>, _>>()?;
    let preds: Vec<usize> = traces.iter().map(|t| t.predicted()).collect();
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let mean_loss = traces.iter().zip(&golds).map(|(t, &g)| t.loss(g)).sum::<f64>() / examples.len() as f64;

    let mut by_target: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (ex, &p) in examples.iter().zip(&preds) {
        let e = by_target.entry(ex.target.as_str()).or_default();
        e.0.push(p);
        e.1.push(ex.label);
    }
    let per_target = by_target
        .into_iter()
        .map(|(t, (p, g))| Ok((t.to_string(), macro_f1(&p, &g, labels, mode)?)))
        .collect::<Result<_, TrainError>>()?;

    let predictions = examples
        .iter()
        .zip(&traces)
        .map(|(ex, t)| Prediction {
            text: ex.text.clone(),
            target: ex.target.clone(),
            gold: labels.name(ex.label).to_string(),
            pred: labels.name(t.predicted()).to_string(),
            probabilities: t.probs.to_vec(),
            selected_filters: t.selected_filters(),
        })
        .collect();
    Ok(EvalReport {
        favor_against: macro_f1(&preds, &golds, labels, MetricMode::FavorAgainstOnly)?,
        all_classes: macro_f1(&preds, &golds, labels, MetricMode::AllClasses)?,
        per_target,
        mean_loss,
        predictions,
    })
}
