//! Summed binary cross-entropy objective, ridge penalty, dropout masks and
//! the full reverse-mode gradient.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Instance;
use crate::decoder::{
    marginal_backward, score_marginal, tucker_backward, tucker_forward, JointTarget, N_CLASSES,
};
use crate::encoder::{encode_static, forward_trace, static_backward};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

use super::params::{Head, ModelParams};
use super::TrainConfig;

const LOG_FLOOR: f64 = 1e-12;

/// Dropout masks for one instance, one per history step.
pub type InstanceMasks = Vec<Vector>;

fn bce_terms(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&y, &p) in truth.iter().zip(pred) {
        if p.is_nan() {
            return Err(Error::NonFinite(format!("predicted probability {p}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("predicted probability {p} outside [0, 1]")));
        }
        let p = p.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
        total -= y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p);
    }
    Ok(total)
}

/// `−Σ_jk [u log û + (1 − u) log(1 − û)]` over the 9 joint cells.
pub fn bce_sum(target: &JointTarget, uhat: &Matrix) -> Result<f64> {
    if uhat.shape() != (N_CLASSES, N_CLASSES) {
        return Err(Error::shape("bce_sum", N_CLASSES * N_CLASSES, uhat.rows() * uhat.cols()));
    }
    bce_terms(target.matrix().as_slice(), uhat.as_slice())
}

/// Inverted dropout: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 − rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vector {
    if rate <= 0.0 {
        return Vector::filled(len, 1.0);
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect::<Vec<_>>()
        .into()
}

/// Masks for every history step of every instance in the batch.
pub fn sample_masks<R: Rng + ?Sized>(
    batch: &[&Instance],
    rate: f64,
    rng: &mut R,
) -> Vec<InstanceMasks> {
    batch
        .iter()
        .map(|inst| {
            inst.history
                .iter()
                .map(|x| dropout_mask(x.len(), rate, rng))
                .collect()
        })
        .collect()
}

/// How the ridge term is weighted for one batch: `λ · |batch| / N_train`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ridge {
    pub lambda: f64,
    pub batch_len: usize,
    pub n_train: usize,
}

impl Ridge {
    pub fn none() -> Self {
        Ridge {
            lambda: 0.0,
            batch_len: 1,
            n_train: 1,
        }
    }

    fn weight(&self) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.batch_len as f64 / self.n_train.max(1) as f64
        }
    }
}

/// Weighted sum of squares over the regularized arrays (static map and
/// head; never LSTM weights or biases).
pub fn ridge_penalty(params: &ModelParams, ridge: Ridge) -> f64 {
    let w = ridge.weight();
    if w == 0.0 {
        return 0.0;
    }
    let ss: f64 = params
        .segments()
        .iter()
        .filter(|s| s.regularized)
        .flat_map(|s| s.values.iter())
        .map(|v| v * v)
        .sum();
    w * ss
}

fn add_ridge_grad(params: &ModelParams, ridge: Ridge, grad: &mut ModelParams) {
    let w = ridge.weight();
    if w == 0.0 {
        return;
    }
    let flags: Vec<bool> = params.segments().iter().map(|s| s.regularized).collect();
    let values: Vec<&[f64]> = params.segments().iter().map(|s| s.values).collect();
    for ((g, v), reg) in grad.segments_mut().into_iter().zip(values).zip(flags) {
        if reg {
            for (gi, vi) in g.iter_mut().zip(v) {
                *gi += 2.0 * w * vi;
            }
        }
    }
}

/// Loss of one instance; accumulates its gradient when `grad` is given.
pub(crate) fn instance_loss(
    inst: &Instance,
    params: &ModelParams,
    masks: Option<&[Vector]>,
    mut grad: Option<&mut ModelParams>,
) -> Result<f64> {
    let trace = forward_trace(&inst.history, masks, &params.lstm)?;
    let s = encode_static(&inst.static_features, &params.static_enc)?;
    let a = trace.output().concat(&s);
    let (loss, da) = match &params.head {
        Head::Tensor(t) => {
            let tt = tucker_forward(&a, t)?;
            let u = inst.target.matrix();
            let loss = bce_terms(u.as_slice(), tt.probs.as_slice())?;
            let da = match grad.as_deref_mut().map(|g| &mut g.head) {
                Some(Head::Tensor(g)) => {
                    let mut dl = tt.probs.clone();
                    for (d, y) in dl.as_mut_slice().iter_mut().zip(u.as_slice()) {
                        *d -= y;
                    }
                    Some(tucker_backward(&a, &tt, &dl, t, g))
                }
                Some(_) => unreachable!("gradient head matches parameter head"),
                None => None,
            };
            (loss, da)
        }
        Head::Marginal(m) => {
            let (py, pz) = score_marginal(&a, m)?;
            let y = inst.target.intention_vec();
            let z = inst.target.type_vec();
            let loss = bce_terms(&y, &py)? + bce_terms(&z, &pz)?;
            match grad.as_deref_mut().map(|g| &mut g.head) {
                Some(Head::Marginal(g)) => {
                    let dy: Vec<f64> = py.iter().zip(y.iter()).map(|(p, t)| p - t).collect();
                    let dz: Vec<f64> = pz.iter().zip(z.iter()).map(|(p, t)| p - t).collect();
                    (loss, Some(marginal_backward(&a, &dy, &dz, m, g)))
                }
                Some(_) => unreachable!("gradient head matches parameter head"),
                None => (loss, None),
            }
        }
    };
    if let (Some(da), Some(grad)) = (da, grad) {
        let hidden = params.dims.hidden_dim;
        trace.backward(&da[..hidden], &params.lstm, &mut grad.lstm, None);
        static_backward(&inst.static_features, &s, &da[hidden..], &mut grad.static_enc);
    }
    Ok(loss)
}

/// Summed loss over a batch plus the ridge term, with fixed dropout masks
/// (or none).
pub fn objective_with_masks(
    batch: &[&Instance],
    params: &ModelParams,
    ridge: Ridge,
    masks: Option<&[InstanceMasks]>,
) -> Result<f64> {
    let mut total = ridge_penalty(params, ridge);
    for (i, inst) in batch.iter().enumerate() {
        total += instance_loss(inst, params, masks.map(|m| &m[i][..]), None)?;
    }
    Ok(total)
}

/// Objective and its gradient, with fixed dropout masks (or none).
pub fn gradient_with_masks(
    batch: &[&Instance],
    params: &ModelParams,
    ridge: Ridge,
    masks: Option<&[InstanceMasks]>,
) -> Result<(f64, ModelParams)> {
    let mut grad = params.zeros_like();
    let mut total = ridge_penalty(params, ridge);
    for (i, inst) in batch.iter().enumerate() {
        total += instance_loss(inst, params, masks.map(|m| &m[i][..]), Some(&mut grad))?;
    }
    add_ridge_grad(params, ridge, &mut grad);
    Ok((total, grad))
}

fn ridge_for(cfg: &TrainConfig, batch_len: usize, n_train: usize) -> Ridge {
    Ridge {
        lambda: cfg.ridge_lambda,
        batch_len,
        n_train,
    }
}

/// Batch objective: summed cross-entropy plus `λ·(|batch|/N_train)·Σθ²`.
/// Dropout is drawn from `rng` only when `training` is set.
pub fn total_objective<R: Rng + ?Sized>(
    batch: &[Instance],
    params: &ModelParams,
    cfg: &TrainConfig,
    n_train: usize,
    training: bool,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let refs: Vec<&Instance> = batch.iter().collect();
    let ridge = ridge_for(cfg, batch.len(), n_train);
    if training && cfg.dropout_rate > 0.0 {
        let masks = sample_masks(&refs, cfg.dropout_rate, rng);
        objective_with_masks(&refs, params, ridge, Some(&masks))
    } else {
        objective_with_masks(&refs, params, ridge, None)
    }
}

/// Gradient of the training-mode objective in flat parameter order.
pub fn backward<R: Rng + ?Sized>(
    batch: &[Instance],
    params: &ModelParams,
    cfg: &TrainConfig,
    n_train: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let refs: Vec<&Instance> = batch.iter().collect();
    let ridge = ridge_for(cfg, batch.len(), n_train);
    let masks = (cfg.dropout_rate > 0.0).then(|| sample_masks(&refs, cfg.dropout_rate, rng));
    let (_, grad) = gradient_with_masks(&refs, params, ridge, masks.as_deref())?;
    Ok(grad.flatten())
}
