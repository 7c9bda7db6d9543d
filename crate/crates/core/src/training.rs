//! Momentum SGD training with step or milestone learning-rate schedules.
//!
//! Mini-batches are drawn from a seeded shuffle and assembled on a worker
//! thread that stays at most [`PREFETCH_DEPTH`] batches ahead of the update
//! loop. Dropout masks come from a second generator derived from the same
//! seed, so a run is fully determined by its configuration.

use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SkeletonSequence;
use crate::evaluation::{predict_logits, top1_predictions};
use crate::models::{Model, ModelKind, Mode};
use crate::numerics::{Tape, Tensor};
use crate::pipeline::batch_tensor;
use crate::{Error, Result};

/// Batches assembled ahead of the update step.
pub const PREFETCH_DEPTH: usize = 2;

const DROPOUT_STREAM: u64 = 0x6472_6f70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    /// Multiply by `factor` every `every` epochs.
    Step { every: usize, factor: f64 },
    /// Multiply by `factor` on reaching each listed epoch.
    Milestones { epochs: Vec<usize>, factor: f64 },
}

impl Schedule {
    fn factor(&self) -> f64 {
        match self {
            Schedule::Step { factor, .. } | Schedule::Milestones { factor, .. } => *factor,
        }
    }

    /// Number of decays applied by the start of `epoch`.
    fn decays(&self, epoch: usize) -> usize {
        match self {
            Schedule::Step { every, .. } => epoch / every,
            Schedule::Milestones { epochs, .. } => epochs.iter().filter(|&&m| m <= epoch).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    pub schedule: Schedule,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Skip the final short batch of each epoch.
    pub drop_last: bool,
    /// Stop once eval-mode top-1 on the training set reaches this percent.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_model(ModelKind::Stgcn)
    }
}

impl TrainConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Stgcn => TrainConfig {
                momentum: 0.9,
                weight_decay: 0.0,
                base_lr: 0.01,
                schedule: Schedule::Step { every: 10, factor: 0.1 },
                total_epochs: 50,
                batch_size: 32,
                seed: 0,
                drop_last: false,
                target_accuracy: None,
            },
            ModelKind::Hyperformer => TrainConfig {
                momentum: 0.9,
                weight_decay: 0.0,
                base_lr: 0.025,
                schedule: Schedule::Milestones {
                    epochs: vec![110, 120],
                    factor: 0.1,
                },
                total_epochs: 140,
                batch_size: 128,
                seed: 0,
                drop_last: false,
                target_accuracy: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        let factor = self.schedule.factor();
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Config(format!("decay factor must be in (0, 1), got {factor}")));
        }
        match &self.schedule {
            Schedule::Step { every, .. } if *every == 0 => {
                return Err(Error::Config("step schedule needs every ≥ 1".into()));
            }
            Schedule::Milestones { epochs, .. } => {
                if epochs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(format!("milestones {epochs:?} are not strictly increasing")));
                }
                if let Some(&last) = epochs.last() {
                    if last >= self.total_epochs {
                        return Err(Error::Config(format!(
                            "milestone {last} is not below total_epochs {}",
                            self.total_epochs
                        )));
                    }
                }
            }
            Schedule::Step { .. } => {}
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=100.0).contains(&t) {
                return Err(Error::Config(format!("target_accuracy {t} outside [0, 100]")));
            }
        }
        Ok(())
    }
}

/// Learning rate in effect during `epoch` (0-based).
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.total_epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} outside [0, {})",
            cfg.total_epochs
        )));
    }
    let decays = cfg.schedule.decays(epoch);
    Ok(cfg.base_lr * cfg.schedule.factor().powi(decays as i32))
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `p ← p − lr·v`.
/// Weight decay adds `λp` to the gradient first.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("sgd", "parameter and gradient counts differ"));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::dim("sgd", "parameter count changed between steps"));
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || v.len() != p.len() {
                return Err(Error::dim("sgd", format!("{:?} vs {:?}", p.shape(), g.shape())));
            }
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                let g = gi + self.weight_decay * *pi;
                *vi = self.momentum * *vi + g;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy over the epoch's batches.
    pub loss: f64,
    /// Top-1 percent of the train-mode predictions made during the epoch.
    pub train_acc: f64,
    /// Eval-mode top-1 percent on the training set, when a target is set.
    pub eval_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Trailing moving average of the loss with the given window.
    pub fn smoothed_loss(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        let losses: Vec<f64> = self.epochs.iter().map(|r| r.loss).collect();
        (0..losses.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(window);
                losses[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "lr", "loss", "train_acc", "eval_acc"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.loss.to_string(),
                r.train_acc.to_string(),
                r.eval_acc.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

/// Trains `model` in place on prepared sequences.
pub fn train(model: &mut Model, data: &[SkeletonSequence], cfg: &TrainConfig) -> Result<TrainHistory> {
    train_with_observer(model, data, cfg, |_| {})
}

/// As [`train`], calling `observe` after every epoch.
pub fn train_with_observer<F>(
    model: &mut Model,
    data: &[SkeletonSequence],
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<TrainHistory>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    let mut history = TrainHistory::default();
    if cfg.total_epochs == 0 {
        return Ok(history);
    }
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.drop_last && cfg.batch_size > data.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} training sequences with drop_last set",
            cfg.batch_size,
            data.len()
        )));
    }
    let num_classes = model.num_classes();
    for (i, seq) in data.iter().enumerate() {
        seq.validate(Some(num_classes))
            .map_err(|e| Error::Config(format!("training sequence {i}: {e}")))?;
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);

    for epoch in 0..cfg.total_epochs {
        let lr = lr_at(cfg, epoch)?;
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order
            .chunks(cfg.batch_size)
            .filter(|b| !cfg.drop_last || b.len() == cfg.batch_size)
            .collect();

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel(PREFETCH_DEPTH);
            let batches = &batches;
            scope.spawn(move || {
                for idx in batches {
                    let seqs: Vec<&SkeletonSequence> = idx.iter().map(|&i| &data[i]).collect();
                    let labels: Vec<usize> = seqs.iter().map(|s| s.label).collect();
                    if tx.send(batch_tensor(&seqs).map(|t| (t, labels))).is_err() {
                        break;
                    }
                }
            });
            for (batch, item) in rx.iter().enumerate() {
                let (input, labels) = item?;
                let tape = Tape::new();
                let vars = model.params().bind(&tape);
                let out = model.forward(&tape, &vars, &input, Mode::Train(&mut dropout_rng))?;
                let loss = tape.cross_entropy(&out.logits, &labels)?;
                let value = loss.value().item()?;
                if !value.is_finite() {
                    return Err(Error::Divergence { epoch, batch });
                }
                let grads = tape.backward(&loss)?;
                let grads: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(v)).collect();
                sgd.step(model.params_mut().tensors_mut(), &grads, lr)?;
                model.apply_buffer_updates(out.buffer_updates)?;

                loss_sum += value * labels.len() as f64;
                seen += labels.len();
                correct += top1_predictions(out.logits.value())?
                    .iter()
                    .zip(&labels)
                    .filter(|(p, l)| p == l)
                    .count();
            }
            Ok(())
        })?;

        let eval_acc = match cfg.target_accuracy {
            Some(_) => Some(training_accuracy(model, data, cfg.batch_size)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / seen.max(1) as f64,
            train_acc: 100.0 * correct as f64 / seen.max(1) as f64,
            eval_acc,
        };
        observe(&record);
        history.epochs.push(record);
        if let (Some(target), Some(acc)) = (cfg.target_accuracy, eval_acc) {
            if acc >= target {
                history.stopped_early = epoch + 1 < cfg.total_epochs;
                break;
            }
        }
    }
    Ok(history)
}

fn training_accuracy(model: &Model, data: &[SkeletonSequence], batch_size: usize) -> Result<f64> {
    let logits = predict_logits(model, data, batch_size)?;
    let correct = top1_predictions(&logits)?
        .iter()
        .zip(data)
        .filter(|(p, s)| **p == s.label)
        .count();
    Ok(100.0 * correct as f64 / data.len() as f64)
}
