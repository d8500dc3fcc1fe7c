//! End-to-end training of either model with minibatch RMSprop and early
//! stopping on the validation loss.

mod gradcheck;
mod objective;
mod optim;
mod params;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::seeded_rng;

pub use gradcheck::{grad_check, grad_check_all, CheckConfig, GradCheckDims, GradCheckReport, GRAD_CHECK_TOLERANCE};
pub use objective::{
    backward, bce_sum, dropout_mask, gradient_with_masks, objective_with_masks, ridge_penalty,
    sample_masks, total_objective, InstanceMasks, Ridge,
};
pub use optim::{rmsprop_step, OptState};
pub use params::{Head, ModelDims, ModelKind, ModelParams, Segment};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub ridge_lambda: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            max_epochs: 1000,
            rho: 0.9,
            epsilon: 1e-6,
            ridge_lambda: 0.01,
            dropout_rate: 0.1,
            batch_size: 32,
            patience: 25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Validation(format!("train config: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail("rho must be in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail("epsilon must be positive");
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return fail("ridge_lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-instance training objective over the epoch's minibatches
    /// (dropout on, ridge share included).
    pub train_loss: f64,
    /// Mean per-instance cross-entropy on the validation set, dropout off.
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Mean per-instance cross-entropy, dropout off, no ridge.
pub fn mean_loss(instances: &[Instance], params: &ModelParams) -> Result<f64> {
    let refs: Vec<&Instance> = instances.iter().collect();
    Ok(objective_with_masks(&refs, params, Ridge::none(), None)? / instances.len() as f64)
}

/// Trains one model from a seeded initialization and returns the parameters
/// of the epoch with the lowest validation loss.
pub fn train(
    train_set: &[Instance],
    val_set: &[Instance],
    cfg: &TrainConfig,
    kind: ModelKind,
    dims: ModelDims,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    dims.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Validation("validation set is empty".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut params = ModelParams::init(dims, kind, &mut rng);
    let mut opt = OptState::new(params.n_params());
    let n_train = train_set.len();

    let mut order: Vec<usize> = (0..n_train).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &train_set[i]).collect();
            let masks = (cfg.dropout_rate > 0.0)
                .then(|| sample_masks(&batch, cfg.dropout_rate, &mut rng));
            let ridge = Ridge {
                lambda: cfg.ridge_lambda,
                batch_len: batch.len(),
                n_train,
            };
            let (loss, grad) = gradient_with_masks(&batch, &params, ridge, masks.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss {loss} at epoch {epoch}")));
            }
            opt.apply(&mut params, &grad, cfg);
            epoch_loss += loss;
        }
        let train_loss = epoch_loss / n_train as f64;
        let val_loss = mean_loss(val_set, &params)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().is_none_or(|(_, b, _)| val_loss < *b);
        if improved {
            best = Some((epoch, val_loss, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_val_loss, best_params) = best.expect("at least one epoch ran");
    Ok((
        best_params,
        TrainHistory {
            epochs,
            best_epoch,
            best_val_loss,
            stopped_early,
        },
    ))
}
