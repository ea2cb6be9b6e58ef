use serde::{Deserialize, Serialize};

use super::classifier::{Classifier, Sample};
use crate::numkit::{Optimizer, OptimizerKind, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            lr: 1e-4,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be ≥ 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be finite and ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept; 0 if none ran.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Minibatch training with early stopping on validation loss. The
/// parameters of the best validation epoch are restored before returning.
pub fn fit(model: &mut Classifier, train: &[Sample], val: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<FitHistory> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut rng = Rng::new(seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = FitHistory {
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = model.params.snapshot();
    let mut stale = 0;
    let model_view = model.clone();
    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train[i]).collect();
            let loss = model_view.objective(&mut model.params, &samples, true)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    slot: "loss".into(),
                    reason: format!("non-finite training loss in epoch {epoch}"),
                });
            }
            total += loss;
            model.params.scale_grads(1.0 / batch.len() as f64);
            opt.step(&mut model.params)?;
        }
        let val_loss = if val.is_empty() { total / train.len() as f64 } else { model.mean_loss(val)? };
        if !val_loss.is_finite() {
            return Err(Error::Training {
                slot: "loss".into(),
                reason: format!("non-finite validation loss in epoch {epoch}"),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5}", total / train.len() as f64);
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.params.snapshot();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.params.restore(&best)?;
    Ok(history)
}
