use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stop after this many epochs without a better validation score.
    pub patience: Option<usize>,
    #[serde(default)]
    pub schedule: LrSchedule,
}

/// Per-epoch learning-rate multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `½(1 + cos(π(e − 1)/E))` at epoch `e` of `E`.
    Cosine,
}

impl LrSchedule {
    pub fn factor(self, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * (epoch - 1) as f64 / epochs as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based; 0 when none ran).
    pub best_epoch: usize,
}

/// A model trainable by [`fit`].
pub trait Trainable: Clone {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn batch_loss(&self, g: &mut Graph, batch: &[&Sample], rng: &mut Rng) -> Result<Var>;
    /// Refreshes running statistics from the batch just processed.
    fn update_stats(&mut self, g: &Graph);
    /// `(loss, accuracy)` on held-out samples.
    fn evaluate(&self, valid: &[Sample]) -> Result<(f64, f64)>;
}

/// Mini-batch Adam over every parameter. The parameters with the best
/// validation accuracy (ties: lower loss) are restored at the end.
pub fn fit<M: Trainable>(model: &mut M, train: &[Sample], valid: &[Sample], cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let ids: Vec<_> = model.store().ids().collect();
    let mut opt = Adam::new(cfg.adam, model.store(), ids.clone());
    model.store_mut().zero_grad();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, f64, M)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        opt.set_lr(cfg.adam.lr * cfg.schedule.factor(epoch, cfg.epochs));
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let mut g = Graph::new();
            let loss = model.batch_loss(&mut g, &batch, rng)?;
            let value = g.scalar(loss);
            g.backward(loss)?;
            g.accumulate_param_grads(model.store_mut());
            let norm = model.store().grad_norm(&ids);
            if !value.is_finite() || !norm.is_finite() {
                let scenes: Vec<u64> = batch.iter().map(|s| s.scene_id).collect();
                return Err(Error::Diverged(format!(
                    "epoch {epoch}: loss {value}, gradient norm {norm}, batch scenes {scenes:?}"
                )));
            }
            opt.step(model.store_mut());
            model.update_stats(&g);
            loss_sum += value;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let (valid_loss, valid_accuracy) = if valid.is_empty() {
            (train_loss, f64::NAN)
        } else {
            model.evaluate(valid)?
        };
        log::info!("epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} acc {valid_accuracy:.4}");
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
            valid_accuracy,
        });
        let score = if valid_accuracy.is_nan() { 0.0 } else { valid_accuracy };
        let better = best
            .as_ref()
            .is_none_or(|(a, l, _)| score > *a || (score == *a && valid_loss < *l));
        if better {
            best = Some((score, valid_loss, model.clone()));
            log.best_epoch = epoch;
        } else if cfg.patience.is_some_and(|p| epoch - log.best_epoch >= p) {
            break;
        }
    }
    if let Some((_, _, m)) = best {
        *model = m;
    }
    Ok(log)
}
