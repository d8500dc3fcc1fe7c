//! Non-learned reference predictors.

use alloc::vec::Vec;

use rand::Rng;

use crate::decoder::{pseudo_joint, JointTarget, N_CLASSES};
use crate::error::{Error, Result};
use crate::seeded_rng;
use crate::tensor::{Matrix, Vector};

/// Training-set class frequencies of each target.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityModel {
    pub freq_y: Vector,
    pub freq_z: Vector,
}

pub fn fit_most_popular(targets: &[JointTarget]) -> Result<PopularityModel> {
    if targets.is_empty() {
        return Err(Error::Validation("cannot fit frequencies on zero targets".into()));
    }
    let mut y = [0usize; N_CLASSES];
    let mut z = [0usize; N_CLASSES];
    for t in targets {
        y[t.intention] += 1;
        z[t.therapy_type] += 1;
    }
    let n = targets.len() as f64;
    let freq = |c: [usize; N_CLASSES]| Vector::from(c.iter().map(|&v| v as f64 / n).collect::<Vec<_>>());
    Ok(PopularityModel {
        freq_y: freq(y),
        freq_z: freq(z),
    })
}

/// The same pseudo-joint for every instance.
pub fn predict_most_popular(m: &PopularityModel) -> Matrix {
    pseudo_joint(&m.freq_y, &m.freq_z)
}

/// Nine independent `U[0, 1)` scores per instance.
pub fn predict_random(seed: u64, n_instances: usize) -> Vec<Matrix> {
    let mut rng = seeded_rng(seed);
    (0..n_instances)
        .map(|_| Matrix::from_fn(N_CLASSES, N_CLASSES, |_, _| rng.random::<f64>()))
        .collect()
}
