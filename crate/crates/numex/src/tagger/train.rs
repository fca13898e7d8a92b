//! Masked negative log-likelihood, analytic gradients and the training
//! loop.
//!
//! Per sample the loss is the mean NLL over *active* tasks; a task whose
//! structured value was missing contributes neither loss nor gradient, so
//! its head is untouched by that sample. The batch loss is the mean over
//! contributing samples plus an L2 term covering the encoder and the heads
//! that actually saw data in the batch (pinned transitions excluded).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{flatten_to_mast, resolve_conflicts, BioTag, MultiTaskAnnotation};
use crate::corpus::ProductRecord;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, GoldMention, Predictions};

use super::crf::{forward_backward, path_score};
use super::encoder::{encode_backward, EncodedSequence};
use super::{CrfModel, Mode, ModelSetup, TagSpace};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Epochs without dev-F1 improvement before stopping early.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 32,
            l2: 1e-6,
            clip_norm: 5.0,
            seed: 0,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || self.l2 < 0.0
            || self.clip_norm <= 0.0
            || self.patience == 0
        {
            return Err(Error::InvalidConfig(
                "training config fields must be positive (l2 may be zero)".into(),
            ));
        }
        Ok(())
    }
}

/// Labelled records used for early stopping.
#[derive(Clone, Copy)]
pub struct DevSet<'a> {
    pub records: &'a [ProductRecord],
    pub gold: &'a [GoldMention],
}

impl<'a> DevSet<'a> {
    pub fn empty() -> DevSet<'static> {
        DevSet {
            records: &[],
            gold: &[],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// What happened during training.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_dev_f1: Option<f64>,
    pub epoch_losses: Vec<f64>,
    pub dev_f1_history: Vec<f64>,
    /// Samples in the training set with each head's task active.
    pub head_active_samples: BTreeMap<String, usize>,
    /// Batches in which each head received a data gradient.
    pub head_update_batches: BTreeMap<String, usize>,
}

fn bio_index(tag: BioTag) -> usize {
    match tag {
        BioTag::B => super::BIO_B,
        BioTag::I => super::BIO_I,
        BioTag::O => super::BIO_O,
    }
}

/// A sample contributes when it has tokens and, in multi-task mode, at
/// least one active task.
fn contributes(sample: &MultiTaskAnnotation, mode: Mode) -> bool {
    !sample.tokens.is_empty()
        && match mode {
            Mode::Mast => true,
            Mode::Mamt => sample.has_active_task(),
        }
}

/// NLL and gradient of one head on one sample, scaled by `weight`;
/// accumulates into the flat gradient and the shared dLoss/dHidden buffer.
fn head_contribution(
    model: &CrfModel,
    head: usize,
    encoded: &EncodedSequence,
    gold: &[usize],
    weight: f64,
    grad: &mut [f64],
    grad_hidden: &mut [Vec<f64>],
) -> f64 {
    let hl = &model.layout.heads[head];
    let t_count = model.heads[head].tags.count();
    let emissions = model.head_emissions(head, &encoded.hidden);
    let trans = model.head_transitions(head);
    let marginals = forward_backward(&emissions, &trans);
    let gold_score = path_score(&emissions, &trans, gold);
    let nll = marginals.log_z - gold_score;

    let emission_weights =
        &model.params[hl.emission.offset..hl.emission.offset + hl.emission.len];
    let len = gold.len();
    for t in 0..len {
        let hidden = &encoded.hidden[t];
        for y in 0..t_count {
            let mut d = marginals.unary[t][y];
            if gold[t] == y {
                d -= 1.0;
            }
            if d == 0.0 {
                continue;
            }
            d *= weight;
            for (j, hj) in hidden.iter().enumerate() {
                grad[hl.emission.offset + j * t_count + y] += hj * d;
                grad_hidden[t][j] += emission_weights[j * t_count + y] * d;
            }
        }
    }
    for t in 0..len.saturating_sub(1) {
        let pair = &marginals.pairwise[t];
        let gold_pair = gold[t] * t_count + gold[t + 1];
        for idx in 0..t_count * t_count {
            let mut d = pair[idx];
            if idx == gold_pair {
                d -= 1.0;
            }
            if d != 0.0 {
                grad[hl.transition.offset + idx] += d * weight;
            }
        }
    }
    for y in 0..t_count {
        let mut d_start = marginals.unary[0][y];
        if gold[0] == y {
            d_start -= 1.0;
        }
        grad[hl.start.offset + y] += d_start * weight;
        let mut d_stop = marginals.unary[len - 1][y];
        if gold[len - 1] == y {
            d_stop -= 1.0;
        }
        grad[hl.stop.offset + y] += d_stop * weight;
    }
    nll * weight
}

pub(crate) struct BatchGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub heads_in_play: Vec<bool>,
}

pub(crate) fn nll_and_gradient_impl(
    batch: &[&MultiTaskAnnotation],
    model: &CrfModel,
    l2: f64,
) -> Result<BatchGrad> {
    let counted: Vec<&&MultiTaskAnnotation> = batch
        .iter()
        .filter(|s| contributes(s, model.mode))
        .collect();
    if counted.is_empty() {
        return Err(Error::EmptyInput(
            "batch has no sample with an active task".into(),
        ));
    }
    let sample_weight = 1.0 / counted.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut heads_in_play = vec![false; model.heads.len()];
    let mut loss = 0.0;

    for sample in counted {
        let encoded = model.encode(&sample.tokens);
        let mut grad_hidden = vec![vec![0.0; model.encoder.hidden]; sample.tokens.len()];
        match model.mode {
            Mode::Mast => {
                let TagSpace::Mast(tag_set) = &model.heads[0].tags else {
                    unreachable!("single-task model carries a flattened head");
                };
                let resolved = resolve_conflicts(sample, &model.attributes);
                let gold = flatten_to_mast(&resolved, tag_set)?;
                heads_in_play[0] = true;
                loss += head_contribution(
                    model,
                    0,
                    &encoded,
                    &gold,
                    sample_weight,
                    &mut grad,
                    &mut grad_hidden,
                );
            }
            Mode::Mamt => {
                let active: Vec<usize> = model
                    .heads
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| sample.active.get(&h.name).copied().unwrap_or(false))
                    .map(|(i, _)| i)
                    .collect();
                let task_weight = sample_weight / active.len() as f64;
                for head in active {
                    let name = &model.heads[head].name;
                    let gold: Vec<usize> = sample.per_task[name]
                        .iter()
                        .map(|&t| bio_index(t))
                        .collect();
                    heads_in_play[head] = true;
                    loss += head_contribution(
                        model,
                        head,
                        &encoded,
                        &gold,
                        task_weight,
                        &mut grad,
                        &mut grad_hidden,
                    );
                }
            }
        }
        // Encoder weights and bias are laid out back to back at the start
        // of the parameter vector.
        let bias_block = model.layout.encoder_bias;
        let (head, tail) = grad.split_at_mut(bias_block.offset);
        let weights_block = model.layout.encoder_weights;
        encode_backward(
            &encoded,
            &grad_hidden,
            model.encoder.hidden,
            &mut head[weights_block.offset..weights_block.offset + weights_block.len],
            &mut tail[..bias_block.len],
        );
    }

    if l2 > 0.0 {
        let mut in_play_ranges: Vec<std::ops::Range<usize>> = Vec::new();
        in_play_ranges.push(
            model.layout.encoder_weights.offset
                ..model.layout.encoder_bias.offset + model.layout.encoder_bias.len,
        );
        for (head, &used) in heads_in_play.iter().enumerate() {
            if used {
                in_play_ranges.push(model.head_param_range(head));
            }
        }
        for range in in_play_ranges {
            for idx in range {
                if model.frozen[idx] {
                    continue;
                }
                let p = model.params[idx];
                loss += 0.5 * l2 * p * p;
                grad[idx] += l2 * p;
            }
        }
    }

    // Pinned transitions are constants; their marginal mass underflows to
    // zero, and this keeps the contract exact regardless.
    for (g, &f) in grad.iter_mut().zip(&model.frozen) {
        if f {
            *g = 0.0;
        }
    }

    Ok(BatchGrad {
        loss,
        grad,
        heads_in_play,
    })
}

/// Batch loss and gradient, same layout as the model's parameter vector.
pub fn nll_and_gradient(
    batch: &[&MultiTaskAnnotation],
    model: &CrfModel,
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    let out = nll_and_gradient_impl(batch, model, l2)?;
    Ok((out.loss, out.grad))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl Adam {
    fn new(len: usize) -> Adam {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, model: &mut CrfModel, grad: &[f64], lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (i, &g) in grad.iter().enumerate() {
            if model.frozen[i] {
                continue;
            }
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            model.params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

fn clip_gradient(grad: &mut [f64], clip_norm: f64) {
    let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

fn dev_micro_f1(model: &CrfModel, dev: &DevSet) -> Result<f64> {
    let mut predictions = Predictions::default();
    for record in dev.records {
        let tokens = crate::corpus::tokenize(&record.text);
        for (attr, values) in model.decode(&tokens) {
            predictions.insert(&record.id, &attr, values);
        }
    }
    Ok(evaluate(dev.gold, &predictions, None)?.micro.f1)
}

/// Trains a model with seeded initialization, shuffled mini-batches,
/// Adam updates and gradient-norm clipping. With a non-empty dev set the
/// parameters of the best dev-F1 epoch are returned and training stops
/// after `patience` epochs without improvement.
pub fn train(
    dataset: &[MultiTaskAnnotation],
    dev: DevSet,
    setup: &ModelSetup,
    config: &TrainConfig,
) -> Result<(CrfModel, TrainReport)> {
    config.validate()?;
    let usable: Vec<&MultiTaskAnnotation> = dataset
        .iter()
        .filter(|s| contributes(s, setup.mode))
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyInput(
            "training set has no usable sample".into(),
        ));
    }
    for sample in &usable {
        for name in &setup.attributes {
            if !sample.per_task.contains_key(name) {
                return Err(Error::InvalidConfig(format!(
                    "annotation for product {} lacks task `{name}`;                      was it produced with a different attribute list?",
                    sample.product_id
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CrfModel::new(setup, &mut rng);
    let mut adam = Adam::new(model.params.len());

    let mut report = TrainReport::default();
    for head in model.heads() {
        let active = match setup.mode {
            Mode::Mast => usable.len(),
            Mode::Mamt => usable
                .iter()
                .filter(|s| s.active.get(&head.name).copied().unwrap_or(false))
                .count(),
        };
        report.head_active_samples.insert(head.name.clone(), active);
        report.head_update_batches.insert(head.name.clone(), 0);
    }

    let mut best_params: Option<Vec<f64>> = None;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut stale_epochs = 0;

    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&MultiTaskAnnotation> = chunk.iter().map(|&i| usable[i]).collect();
            let out = nll_and_gradient_impl(&batch, &model, config.l2)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    param_norm: model.param_norm(),
                });
            }
            let mut grad = out.grad;
            clip_gradient(&mut grad, config.clip_norm);
            adam.update(&mut model, &grad, config.learning_rate);
            for (head, &used) in out.heads_in_play.iter().enumerate() {
                if used {
                    *report
                        .head_update_batches
                        .get_mut(&model.heads[head].name)
                        .expect("head registered") += 1;
                }
            }
            epoch_loss += out.loss;
            batches += 1;
        }
        epoch_loss /= batches as f64;
        report.epoch_losses.push(epoch_loss);
        report.epochs_run = epoch;

        if !dev.is_empty() {
            let f1 = dev_micro_f1(&model, &dev)?;
            report.dev_f1_history.push(f1);
            log::info!("epoch {epoch}: loss {epoch_loss:.6}, dev micro-F1 {f1:.4}");
            if f1 > best_f1 {
                best_f1 = f1;
                best_params = Some(model.params.clone());
                report.best_epoch = Some(epoch);
                report.best_dev_f1 = Some(f1);
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= config.patience {
                    break 'epochs;
                }
            }
        } else {
            log::info!("epoch {epoch}: loss {epoch_loss:.6}");
        }
    }

    if let Some(params) = best_params {
        model.params = params;
    }
    Ok((model, report))
}
