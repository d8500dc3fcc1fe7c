//! One cross-validation split end to end: train both learned models, fit
//! the baselines, and score all four on the held-out patients.

use alloc::vec::Vec;

use crate::baselines::{fit_most_popular, predict_most_popular, predict_random};
use crate::data::{Instance, Partition, PatientRecord, SplitPlan};
use crate::decoder::{top_n_pairs, JointTarget};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ScoredInstance, SplitResult};
use crate::tensor::Matrix;
use crate::trainer::{train, ModelDims, ModelKind, ModelParams, TrainConfig, TrainHistory};

/// Everything one split produced.
#[derive(Clone, Debug)]
pub struct SplitOutcome {
    pub split_id: usize,
    pub metrics: SplitResult,
    pub tensor_history: TrainHistory,
    pub marginal_history: TrainHistory,
    pub n_test: usize,
}

fn scored(predictions: &[Matrix], test: &[Instance]) -> Vec<ScoredInstance> {
    predictions
        .iter()
        .zip(test)
        .map(|(s, inst)| ScoredInstance::from_prediction(s, &inst.target))
        .collect()
}

fn predict_all(params: &ModelParams, test: &[Instance]) -> Result<Vec<Matrix>> {
    test.iter()
        .map(|i| params.predict(&i.history, &i.static_features))
        .collect()
}

/// Runs split `plan`. Both learned models train from seed
/// `cfg.seed + split_id`; the random baseline draws from the same seed.
pub fn run_split(
    records: &[PatientRecord],
    plan: &SplitPlan,
    cfg: &TrainConfig,
    dims: ModelDims,
    k: usize,
) -> Result<SplitOutcome> {
    let train_set = plan.instances(records, Partition::Train);
    let val_set = plan.instances(records, Partition::Validation);
    let test_set = plan.instances(records, Partition::Test);
    if test_set.is_empty() {
        return Err(Error::Validation("test partition holds no decision instances".into()));
    }
    let seed = cfg.seed.wrapping_add(plan.split_id as u64);
    let split_cfg = TrainConfig { seed, ..cfg.clone() };

    let (tensor, tensor_history) = train(&train_set, &val_set, &split_cfg, ModelKind::Tensor, dims)?;
    let (marginal, marginal_history) =
        train(&train_set, &val_set, &split_cfg, ModelKind::Marginal, dims)?;

    let targets: Vec<JointTarget> = train_set.iter().map(|i| i.target).collect();
    let popular = predict_most_popular(&fit_most_popular(&targets)?);
    let popular_all: Vec<Matrix> = (0..test_set.len()).map(|_| popular.clone()).collect();

    // Indexed like `ModelName::ALL`: random, most popular, standard, tensor.
    let metrics = [
        evaluate(&scored(&predict_random(seed, test_set.len()), &test_set), k)?,
        evaluate(&scored(&popular_all, &test_set), k)?,
        evaluate(&scored(&predict_all(&marginal, &test_set)?, &test_set), k)?,
        evaluate(&scored(&predict_all(&tensor, &test_set)?, &test_set), k)?,
    ];
    Ok(SplitOutcome {
        split_id: plan.split_id,
        metrics,
        tensor_history,
        marginal_history,
        n_test: test_set.len(),
    })
}

/// True iff the documented decision is not among the `n` best-scored pairs.
pub fn alert(scores: &Matrix, documented: &JointTarget, n: usize) -> Result<bool> {
    let top = top_n_pairs(scores, n)?;
    Ok(!top
        .iter()
        .any(|((j, k), _)| *j == documented.intention && *k == documented.therapy_type))
}

/// Fraction of instances whose documented decision falls outside the top `n`.
pub fn alert_rate(params: &ModelParams, instances: &[Instance], n: usize) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Validation("alert rate needs at least one instance".into()));
    }
    let mut alerts = 0usize;
    for inst in instances {
        let scores = params.predict(&inst.history, &inst.static_features)?;
        alerts += usize::from(alert(&scores, &inst.target, n)?);
    }
    Ok(alerts as f64 / instances.len() as f64)
}
