//! Central finite-difference verification of the analytic gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Instance, Provenance};
use crate::decoder::JointTarget;
use crate::encoder::{forward_trace, LstmParams};
use crate::error::Result;
use crate::seeded_rng;
use crate::tensor::{dot, Vector};

use super::objective::{gradient_with_masks, objective_with_masks, sample_masks, Ridge};
use super::params::{ModelDims, ModelKind, ModelParams};

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckConfig {
    /// Full tensor model with dropout masks and ridge.
    Tensor,
    /// Full marginal model with dropout masks and ridge.
    Marginal,
    /// Tensor model on a batch that includes empty histories.
    EmptyHistory,
    /// LSTM alone: gradient of a fixed linear read-out of `h_T` with
    /// respect to its parameters and inputs.
    Encoder,
}

impl CheckConfig {
    pub const ALL: [CheckConfig; 4] = [
        CheckConfig::Tensor,
        CheckConfig::Marginal,
        CheckConfig::EmptyHistory,
        CheckConfig::Encoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckConfig::Tensor => "tensor",
            CheckConfig::Marginal => "marginal",
            CheckConfig::EmptyHistory => "empty-history",
            CheckConfig::Encoder => "encoder",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradCheckDims {
    pub input_dim: usize,
    pub static_dim: usize,
    pub hidden_dim: usize,
    pub static_latent: usize,
    pub rank: usize,
    pub seq_len: usize,
    pub batch: usize,
}

impl Default for GradCheckDims {
    fn default() -> Self {
        GradCheckDims {
            input_dim: 4,
            static_dim: 5,
            hidden_dim: 3,
            static_latent: 2,
            rank: 2,
            seq_len: 3,
            batch: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub config: CheckConfig,
    pub n_checked: usize,
    pub max_rel_error: f64,
    /// Largest `|analytic - numeric|`, for telling finite-difference
    /// roundoff on tiny entries apart from real disagreement.
    pub max_abs_error: f64,
    /// Name and index of the worst entry.
    pub worst: (String, usize),
    pub passed: bool,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn central_difference(values: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = values[i];
    values[i] = orig + FD_STEP;
    let plus = f(values);
    values[i] = orig - FD_STEP;
    let minus = f(values);
    values[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

fn random_vec(len: usize, rng: &mut crate::Rng) -> Vector {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>().into()
}

fn random_batch(d: &GradCheckDims, empty_history: bool, rng: &mut crate::Rng) -> Vec<Instance> {
    (0..d.batch)
        .map(|i| {
            let steps = if empty_history && i % 2 == 0 { 0 } else { d.seq_len };
            Instance {
                history: (0..steps).map(|_| random_vec(d.input_dim, rng)).collect(),
                static_features: random_vec(d.static_dim, rng),
                target: JointTarget::new(rng.random_range(0..3), rng.random_range(0..3))
                    .expect("classes in range"),
                provenance: Provenance {
                    patient: format!("gc{i}"),
                    t: steps as u32 + 1,
                },
            }
        })
        .collect()
}

/// Runs one configuration. With `corrupt` set, the largest analytic entry
/// is doubled before comparison, which must make the check fail.
pub fn grad_check(config: CheckConfig, d: GradCheckDims, seed: u64, corrupt: bool) -> Result<GradCheckReport> {
    let mut rng = seeded_rng(seed);
    let (names, mut analytic, numeric) = match config {
        CheckConfig::Encoder => encoder_gradients(&d, &mut rng)?,
        _ => model_gradients(config, &d, &mut rng)?,
    };
    if corrupt {
        let i = (0..analytic.len())
            .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
            .unwrap_or(0);
        analytic[i] *= 2.0;
    }
    let mut max_rel_error = 0.0;
    let max_abs_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let mut worst = (String::new(), 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = rel_error(*a, *n);
        if e > max_rel_error || worst.0.is_empty() {
            max_rel_error = e.max(max_rel_error);
            worst = names[i].clone();
        }
    }
    Ok(GradCheckReport {
        config,
        n_checked: analytic.len(),
        max_rel_error,
        max_abs_error,
        worst,
        passed: max_rel_error < GRAD_CHECK_TOLERANCE,
    })
}

/// Every configuration in [`CheckConfig::ALL`], seeded consecutively.
pub fn grad_check_all(seed: u64, corrupt: bool) -> Result<Vec<GradCheckReport>> {
    CheckConfig::ALL
        .iter()
        .enumerate()
        .map(|(i, &c)| grad_check(c, GradCheckDims::default(), seed.wrapping_add(i as u64), corrupt))
        .collect()
}

type Gradients = (Vec<(String, usize)>, Vec<f64>, Vec<f64>);

fn model_gradients(config: CheckConfig, d: &GradCheckDims, rng: &mut crate::Rng) -> Result<Gradients> {
    let kind = match config {
        CheckConfig::Marginal => ModelKind::Marginal,
        _ => ModelKind::Tensor,
    };
    let dims = ModelDims {
        input_dim: d.input_dim,
        static_dim: d.static_dim,
        hidden_dim: d.hidden_dim,
        static_latent: d.static_latent,
        rank: d.rank,
    };
    let mut params = ModelParams::init(dims, kind, rng);
    // Non-trivial biases so no gate sits at its symmetric point.
    for b in params.lstm.b.iter_mut() {
        b.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
    }
    let batch = random_batch(d, config == CheckConfig::EmptyHistory, rng);
    let refs: Vec<&Instance> = batch.iter().collect();
    let masks = sample_masks(&refs, 0.1, rng);
    let ridge = Ridge {
        lambda: 0.01,
        batch_len: batch.len(),
        n_train: batch.len(),
    };
    let (_, grad) = gradient_with_masks(&refs, &params, ridge, Some(&masks))?;
    let analytic = grad.flatten();

    let mut names = Vec::with_capacity(analytic.len());
    for s in params.segments() {
        names.extend((0..s.values.len()).map(|i| (String::from(s.name), i)));
    }
    let mut flat = params.flatten();
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        numeric.push(central_difference(&mut flat, i, |v| {
            probe.unflatten(v).expect("same length");
            objective_with_masks(&refs, &probe, ridge, Some(&masks)).expect("valid batch")
        }));
    }
    params.unflatten(&flat)?;
    Ok((names, analytic, numeric))
}

fn encoder_gradients(d: &GradCheckDims, rng: &mut crate::Rng) -> Result<Gradients> {
    let mut lstm = LstmParams::init(d.input_dim, d.hidden_dim, rng);
    for b in lstm.b.iter_mut() {
        b.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
    }
    let xs: Vec<Vector> = (0..d.seq_len).map(|_| random_vec(d.input_dim, rng)).collect();
    let readout = random_vec(d.hidden_dim, rng);
    let loss = |p: &LstmParams, xs: &[Vector]| -> f64 {
        dot(&readout, forward_trace(xs, None, p).expect("dims agree").output())
    };

    let trace = forward_trace(&xs, None, &lstm)?;
    let mut grad = LstmParams::zeros(d.input_dim, d.hidden_dim);
    let mut dxs = Vec::new();
    trace.backward(&readout, &lstm, &mut grad, Some(&mut dxs));

    let mut names = Vec::new();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let labels = ["w", "r", "b"];
    for (group, label) in labels.iter().enumerate() {
        for k in 0..4 {
            let g: &[f64] = match group {
                0 => grad.w[k].as_slice(),
                1 => grad.r[k].as_slice(),
                _ => &grad.b[k],
            };
            let mut vals = g.to_vec();
            for i in 0..g.len() {
                vals.copy_from_slice(match group {
                    0 => lstm.w[k].as_slice(),
                    1 => lstm.r[k].as_slice(),
                    _ => &lstm.b[k],
                });
                let n = central_difference(&mut vals, i, |v| {
                    let mut p = lstm.clone();
                    let s: &mut [f64] = match group {
                        0 => p.w[k].as_mut_slice(),
                        1 => p.r[k].as_mut_slice(),
                        _ => &mut p.b[k],
                    };
                    s.copy_from_slice(v);
                    loss(&p, &xs)
                });
                names.push((format!("lstm.{label}[{k}]"), i));
                analytic.push(g[i]);
                numeric.push(n);
            }
        }
    }
    for (t, dx) in dxs.iter().enumerate() {
        for i in 0..d.input_dim {
            let mut probe = xs.clone();
            let mut vals = probe[t].to_vec();
            let n = central_difference(&mut vals, i, |v| {
                probe[t] = Vector::from(v);
                loss(&lstm, &probe)
            });
            names.push((format!("x[{t}]"), i));
            analytic.push(dx[i]);
            numeric.push(n);
        }
    }
    Ok((names, analytic, numeric))
}
