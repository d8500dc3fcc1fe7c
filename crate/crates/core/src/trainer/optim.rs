use alloc::vec;
use alloc::vec::Vec;

use super::params::ModelParams;
use super::TrainConfig;

/// RMSprop running mean of squared gradients, in flat parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub acc: Vec<f64>,
}

impl OptState {
    pub fn new(n_params: usize) -> Self {
        OptState { acc: vec![0.0; n_params] }
    }

    /// Applies one RMSprop update to every parameter array of `params`.
    pub fn apply(&mut self, params: &mut ModelParams, grad: &ModelParams, cfg: &TrainConfig) {
        let grads: Vec<&[f64]> = grad.segments().iter().map(|s| s.values).collect();
        let mut offset = 0;
        for (theta, g) in params.segments_mut().into_iter().zip(grads) {
            let len = theta.len();
            rmsprop_update(theta, g, &mut self.acc[offset..offset + len], cfg);
            offset += len;
        }
    }
}

fn rmsprop_update(theta: &mut [f64], grad: &[f64], acc: &mut [f64], cfg: &TrainConfig) {
    let (rho, lr, eps) = (cfg.rho, cfg.learning_rate, cfg.epsilon);
    for ((t, &g), a) in theta.iter_mut().zip(grad).zip(acc.iter_mut()) {
        *a = rho * *a + (1.0 - rho) * g * g;
        *t -= lr * g / (libm::sqrt(*a) + eps);
    }
}

/// `acc ← ρ·acc + (1−ρ)·g²; θ ← θ − lr·g / (√acc + ε)`.
pub fn rmsprop_step(theta: &mut [f64], grad: &[f64], state: &mut OptState, cfg: &TrainConfig) {
    assert_eq!(theta.len(), grad.len(), "parameter and gradient lengths differ");
    assert_eq!(theta.len(), state.acc.len(), "optimizer state length differs");
    rmsprop_update(theta, grad, &mut state.acc, cfg);
}
