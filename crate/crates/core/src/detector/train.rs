//! Fine-tuning with early stopping, masked-token plus noise pretraining,
//! and evaluation helpers.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_components, EncodedWindow};
use super::model::{softmax, DetectorModel};
use super::optim::AdamW;
use super::params::ParamStore;
use super::vocab::{Vocab, CLS, MASK, SEP};
use crate::alignment::AlignmentResult;
use crate::error::{Error, Result};
use crate::metrics::{micro_f1, PrfScore};
use crate::noise_sim::NoiseSimulator;

/// Error probability above which a box is flagged.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub repeats: usize,
    /// Loss weight of the error class; 1.0 means no reweighting.
    pub positive_class_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 16,
            patience: 5,
            learning_rate: 5e-5,
            weight_decay: 0.01,
            batch_size: 8,
            repeats: 10,
            positive_class_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::invalid("patience must be smaller than max_epochs"));
        }
        if self.batch_size == 0 || self.repeats == 0 {
            return Err(Error::invalid("batch size and repeats must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.positive_class_weight > 0.0) {
            return Err(Error::invalid("learning rate and class weight must be positive"));
        }
        Ok(())
    }
}

/// Patience counter over a maximised validation score.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_score: f64,
    pub best_epoch: usize,
    pub stale_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_score: f64::NEG_INFINITY,
            best_epoch: 0,
            stale_epochs: 0,
        }
    }

    /// Records `score` for 1-based `epoch`; returns whether it is a strict
    /// improvement.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = epoch;
            self.stale_epochs = 0;
            true
        } else {
            self.stale_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale_epochs >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs_run: usize,
    pub trace: Vec<f64>,
}

/// Runs epochs until patience runs out or `max_epochs` is reached.
/// `epoch_fn(epoch)` trains one epoch and returns the validation score;
/// `on_best(epoch)` fires on every strict improvement.
pub fn run_protocol<E, S>(
    max_epochs: usize,
    patience: usize,
    mut epoch_fn: E,
    mut on_best: S,
) -> Result<ProtocolOutcome>
where
    E: FnMut(usize) -> Result<f64>,
    S: FnMut(usize),
{
    let mut stop = EarlyStopping::new(patience);
    let mut trace = Vec::new();
    for epoch in 1..=max_epochs {
        let score = epoch_fn(epoch)?;
        trace.push(score);
        if stop.observe(epoch, score) {
            on_best(epoch);
        }
        if stop.should_stop() {
            break;
        }
    }
    Ok(ProtocolOutcome {
        best_epoch: stop.best_epoch,
        best_score: stop.best_score,
        epochs_run: trace.len(),
        trace,
    })
}

pub fn encode_dataset(results: &[AlignmentResult], vocab: &Vocab, max_seq_len: usize) -> Vec<EncodedWindow> {
    results
        .iter()
        .flat_map(|r| encode_components(&r.components, vocab, max_seq_len))
        .collect()
}

/// Error probability of every component in the window, paired with the
/// component index.
pub fn classify_boxes(model: &DetectorModel, window: &EncodedWindow) -> Vec<(usize, f64)> {
    let fwd = model.forward(&window.token_ids, &window.confidences);
    let logits = model.error_logits(&fwd, &window.spans);
    window
        .component_indices
        .iter()
        .zip(logits.rows())
        .map(|(&i, row)| (i, softmax(row.as_slice().unwrap())[1]))
        .collect()
}

pub fn predict_probabilities(model: &DetectorModel, windows: &[EncodedWindow]) -> Vec<f64> {
    windows
        .iter()
        .flat_map(|w| classify_boxes(model, w).into_iter().map(|(_, p)| p))
        .collect()
}

pub fn evaluate(model: &DetectorModel, windows: &[EncodedWindow]) -> Result<PrfScore> {
    let preds: Vec<bool> = predict_probabilities(model, windows)
        .into_iter()
        .map(|p| p > DECISION_THRESHOLD)
        .collect();
    let labels: Vec<bool> = windows.iter().flat_map(|w| w.labels.iter().copied()).collect();
    micro_f1(&preds, &labels)
}

/// Mean error-head cross-entropy over all boxes of the batch; gradients
/// are accumulated into `grads` when given.
pub fn finetune_loss(
    model: &DetectorModel,
    batch: &[&EncodedWindow],
    positive_class_weight: f64,
    mut grads: Option<&mut ParamStore>,
) -> f64 {
    let total: usize = batch.iter().map(|w| w.spans.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let inv = 1.0 / total as f64;
    let mut loss = 0.0;
    for w in batch {
        let fwd = model.forward(&w.token_ids, &w.confidences);
        let weights: Vec<f64> = w
            .labels
            .iter()
            .map(|&l| if l { positive_class_weight * inv } else { inv })
            .collect();
        match grads.as_deref_mut() {
            None => loss += model.error_loss(&fwd, &w.spans, &w.labels, &weights, None),
            Some(g) => {
                let mut dh = Array2::zeros(fwd.hidden.raw_dim());
                loss += model.error_loss(&fwd, &w.spans, &w.labels, &weights, Some((&mut *g, &mut dh)));
                model.backward(&fwd, &dh, g);
            }
        }
    }
    loss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOutcome {
    pub best_val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

/// Trains all parameters on box labels and leaves `model` at the epoch
/// with the highest validation micro-F1.
pub fn finetune<R: Rng + ?Sized>(
    model: &mut DetectorModel,
    train: &[EncodedWindow],
    val: &[EncodedWindow],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training or validation split"));
    }
    let mut opt = AdamW::new(&model.params, cfg.weight_decay);
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best_params = model.params.clone();

    let model_cell = std::cell::RefCell::new(&mut *model);
    let outcome = run_protocol(
        cfg.max_epochs,
        cfg.patience,
        |epoch| {
            let mut m = model_cell.borrow_mut();
            order.shuffle(rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&EncodedWindow> = chunk.iter().map(|&i| &train[i]).collect();
                grads.fill_zero();
                epoch_loss += finetune_loss(&m, &batch, cfg.positive_class_weight, Some(&mut grads));
                let m = &mut **m;
                opt.update(&mut m.params, &grads, cfg.learning_rate);
            }
            let steps = order.len().div_ceil(cfg.batch_size);
            let val_f1 = evaluate(&m, val)?.f1;
            log::debug!("epoch {epoch}: loss {:.4} val F1 {val_f1:.4}", epoch_loss / steps as f64);
            history.push(EpochRecord {
                epoch,
                train_loss: epoch_loss / steps as f64,
                val_f1,
                alpha: m.alpha(),
            });
            Ok(val_f1)
        },
        |_| best_params = model_cell.borrow().params.clone(),
    )?;
    model.params = best_params;
    Ok(FinetuneOutcome {
        best_val_f1: outcome.best_score,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Initial learning rate, decayed linearly to zero.
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub mask_prob: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 2500,
            batch_size: 8,
            learning_rate: 5e-5,
            weight_decay: 0.01,
            mask_prob: 0.15,
        }
    }
}

/// One noised, masked pretraining sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub tokens: Vec<u32>,
    pub confidences: Vec<f64>,
    pub mlm_positions: Vec<usize>,
    /// Clean token at each masked position.
    pub mlm_targets: Vec<u32>,
    pub noise_positions: Vec<usize>,
    /// Whether the token was substituted before masking.
    pub noise_labels: Vec<bool>,
}

/// Wraps `clean` in `[CLS] .. [SEP]`, noises it, then masks independent
/// positions with the 80/10/10 mask/random/keep split.
pub fn make_pretrain_example<R: Rng + ?Sized>(
    clean: &[u32],
    max_seq_len: usize,
    noise: &NoiseSimulator,
    mask_prob: f64,
    rng: &mut R,
) -> Result<PretrainExample> {
    let body = &clean[..clean.len().min(max_seq_len - 2)];
    let ids: Vec<u32> = std::iter::once(CLS).chain(body.iter().copied()).chain([SEP]).collect();
    let noised = noise.noise_sequence(&ids, rng)?;
    let mut ex = PretrainExample {
        tokens: noised.iter().map(|t| t.observed_id).collect(),
        confidences: noised.iter().map(|t| t.confidence).collect(),
        mlm_positions: Vec::new(),
        mlm_targets: Vec::new(),
        noise_positions: Vec::new(),
        noise_labels: Vec::new(),
    };
    for (i, t) in noised.iter().enumerate() {
        if noise.is_special(t.original_id) {
            continue;
        }
        ex.noise_positions.push(i);
        ex.noise_labels.push(t.was_noised);
        if rng.gen::<f64>() < mask_prob {
            ex.mlm_positions.push(i);
            ex.mlm_targets.push(t.original_id);
            let r: f64 = rng.gen();
            if r < 0.8 {
                ex.tokens[i] = MASK;
            } else if r < 0.9 {
                ex.tokens[i] = loop {
                    let c = rng.gen_range(0..noise.vocab_size());
                    if !noise.is_special(c) {
                        break c;
                    }
                };
            }
        }
    }
    Ok(ex)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainLoss {
    pub total: f64,
    pub mlm: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossPart {
    Mlm,
    Noise,
    Both,
}

/// Batch-mean cross-entropies of the selected pretraining objectives.
pub fn pretrain_loss(
    model: &DetectorModel,
    batch: &[PretrainExample],
    part: LossPart,
    mut grads: Option<&mut ParamStore>,
) -> PretrainLoss {
    let n_mlm: usize = batch.iter().map(|e| e.mlm_positions.len()).sum();
    let n_noise: usize = batch.iter().map(|e| e.noise_positions.len()).sum();
    let w_mlm = if n_mlm == 0 { 0.0 } else { 1.0 / n_mlm as f64 };
    let w_noise = if n_noise == 0 { 0.0 } else { 1.0 / n_noise as f64 };
    let (use_mlm, use_noise) = match part {
        LossPart::Mlm => (true, false),
        LossPart::Noise => (false, true),
        LossPart::Both => (true, true),
    };
    let (mut mlm, mut noise) = (0.0, 0.0);
    for ex in batch {
        let fwd = model.forward(&ex.tokens, &ex.confidences);
        let mut dh = grads.as_ref().map(|_| Array2::zeros(fwd.hidden.raw_dim()));
        if use_mlm {
            let g = grads.as_deref_mut().zip(dh.as_mut());
            mlm += model.mlm_loss(&fwd, &ex.mlm_positions, &ex.mlm_targets, w_mlm, g);
        }
        if use_noise {
            let g = grads.as_deref_mut().zip(dh.as_mut());
            noise += model.noise_loss(&fwd, &ex.noise_positions, &ex.noise_labels, w_noise, g);
        }
        if let (Some(g), Some(dh)) = (grads.as_deref_mut(), dh) {
            model.backward(&fwd, &dh, g);
        }
    }
    PretrainLoss {
        total: mlm + noise,
        mlm,
        noise,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub losses: Vec<PretrainLoss>,
}

/// Joint masked-token and noise-detection training over `corpus` (clean
/// token sequences without specials). Noise is resampled every step.
pub fn pretrain<R: Rng + ?Sized>(
    model: &mut DetectorModel,
    corpus: &[Vec<u32>],
    noise: &NoiseSimulator,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<PretrainOutcome> {
    if corpus.len() < cfg.batch_size || cfg.batch_size == 0 {
        return Err(Error::invalid(format!(
            "pretraining corpus has {} sequences, fewer than one batch of {}",
            corpus.len(),
            cfg.batch_size
        )));
    }
    if noise.vocab_size() as usize != model.config.vocab_size {
        return Err(Error::invalid("noise simulator and model disagree on vocabulary size"));
    }
    let mut opt = AdamW::new(&model.params, cfg.weight_decay);
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let seq = &corpus[order[cursor]];
            cursor += 1;
            batch.push(make_pretrain_example(seq, model.config.max_seq_len, noise, cfg.mask_prob, rng)?);
        }
        grads.fill_zero();
        let loss = pretrain_loss(model, &batch, LossPart::Both, Some(&mut grads));
        if !loss.total.is_finite() {
            return Err(Error::invalid(format!("non-finite pretraining loss at step {step}")));
        }
        let lr = cfg.learning_rate * (1.0 - step as f64 / cfg.steps as f64);
        opt.update(&mut model.params, &grads, lr);
        losses.push(loss);
    }
    Ok(PretrainOutcome { losses })
}

/// Fraction of non-special positions whose noise-head argmax matches the
/// substitution label.
pub fn noise_head_accuracy(model: &DetectorModel, examples: &[PretrainExample]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for ex in examples {
        if ex.noise_positions.is_empty() {
            continue;
        }
        let fwd = model.forward(&ex.tokens, &ex.confidences);
        let logits = model.noise_logits(&fwd, &ex.noise_positions);
        for (row, &label) in logits.rows().into_iter().zip(&ex.noise_labels) {
            hit += usize::from((row[1] > row[0]) == label);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}
